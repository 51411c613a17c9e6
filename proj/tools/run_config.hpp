#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iw/nn.hpp"
#include "iw/transnet.hpp"

namespace iw::cli {

/// Sectioned key=value text ("[section]" headers, '#' comments). Keys are
/// addressed as "section.key".
class IniFile {
 public:
  static IniFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  void set(const std::string& key, const std::string& value);
  void set_num(const std::string& key, double value);

  void save(const std::filesystem::path& path) const;

 private:
  // section -> ordered key/value pairs
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> data_;
};

/// One training run: dataset paths, model configuration, schedule, output.
struct RunConfig {
  std::string train_path, heldout_path;
  transnet::TransNetConfig model;
  std::uint64_t seed = 1;
  int epochs = 10;
  int batch = 64;
  nn::AdamConfig adam{};  // lr 1e-4, x0.1 at epoch 4
  double itw_g_noise = 0.0;
  std::string out_dir;

  static RunConfig from_ini(const IniFile& ini);
  IniFile to_ini() const;
};

std::vector<std::string> split_list(const std::string& csv);

}  // namespace iw::cli
