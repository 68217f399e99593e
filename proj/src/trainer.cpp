#include "kws/trainer.hpp"

#include "kws/error.hpp"

#include <cstdio>
#include <filesystem>

namespace kws {

void write_train_report_csv(const std::string& path, const TrainReport& r) {
  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "w");
  if (!f) throw DataError("report: cannot write " + tmp);
  std::fprintf(f, "epoch,train_loss,dev_loss,lr,skipped\n");
  for (const auto& e : r.epochs)
    std::fprintf(f, "%d,%.9g,%.9g,%.9g,%ld\n", e.epoch, e.train_loss,
                 e.dev_loss, e.learning_rate, e.skipped);
  std::fclose(f);
  std::filesystem::rename(tmp, path);
}

}  // namespace kws
