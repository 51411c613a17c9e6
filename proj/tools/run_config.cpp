#include "run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "iw/errors.hpp"

namespace iw::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::pair<std::string, std::string> split_key(const std::string& key) {
  const auto dot = key.find('.');
  if (dot == std::string::npos)
    throw ConfigError("config key '" + key + "' must be section.key");
  return {key.substr(0, dot), key.substr(dot + 1)};
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

IniFile IniFile::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open " + path.string());
  IniFile ini;
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      ini.data_[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    ini.data_[section].emplace_back(trim(t.substr(0, eq)),
                                    trim(t.substr(eq + 1)));
  }
  return ini;
}

bool IniFile::has(const std::string& key) const {
  const auto [sec, k] = split_key(key);
  const auto it = data_.find(sec);
  if (it == data_.end()) return false;
  for (const auto& [kk, vv] : it->second)
    if (kk == k) return true;
  return false;
}

std::string IniFile::get(const std::string& key,
                         const std::string& fallback) const {
  const auto [sec, k] = split_key(key);
  const auto it = data_.find(sec);
  if (it != data_.end())
    for (const auto& [kk, vv] : it->second)
      if (kk == k) return vv;
  return fallback;
}

double IniFile::get_num(const std::string& key, double fallback) const {
  const std::string v = get(key, "");
  if (v.empty()) return fallback;
  char* end = nullptr;
  const double num = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config value '" + key + " = " + v + "' is not numeric");
  return num;
}

void IniFile::set(const std::string& key, const std::string& value) {
  const auto [sec, k] = split_key(key);
  for (auto& [kk, vv] : data_[sec])
    if (kk == k) {
      vv = value;
      return;
    }
  data_[sec].emplace_back(k, value);
}

void IniFile::set_num(const std::string& key, double value) {
  set(key, fmt_num(value));
}

void IniFile::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("config: cannot write " + path.string());
  bool first = true;
  for (const auto& [sec, entries] : data_) {
    if (!first) os << '\n';
    first = false;
    os << '[' << sec << "]\n";
    for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
  }
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    const size_t comma = csv.find(',', pos);
    const std::string item = trim(
        csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                   : comma - pos));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

RunConfig RunConfig::from_ini(const IniFile& ini) {
  RunConfig rc;
  rc.train_path = ini.get("data.train", "");
  rc.heldout_path = ini.get("data.heldout", "");

  rc.model.input_repr =
      transnet::input_repr_from_name(ini.get("model.input_repr", "hm25d"));
  rc.model.head = transnet::head_from_name(ini.get("model.head", "wrist"));
  const int dims = static_cast<int>(ini.get_num("model.dims", 16));
  rc.model.depth = rc.model.height = rc.model.width = dims;
  rc.model.channels = static_cast<int>(ini.get_num("model.channels", 64));
  const auto widths = split_list(ini.get("model.conv_widths", "32,48"));
  rc.model.conv_widths.clear();
  for (const auto& w : widths) rc.model.conv_widths.push_back(std::atoi(w.c_str()));
  const auto strides = split_list(ini.get("model.conv_strides", "2,2,2"));
  rc.model.conv_strides.clear();
  for (const auto& s : strides) rc.model.conv_strides.push_back(std::atoi(s.c_str()));
  rc.model.sigma = ini.get_num("model.sigma", 2.5);
  rc.model.z_range = ini.get_num("model.z_range", 0.4);
  rc.model.union_res = static_cast<int>(ini.get_num("model.union_res", 256));
  rc.model.weak_supervision = ini.get_num("model.weak_supervision", 0) != 0;
  rc.model.hm_sum_normalize = ini.get_num("model.hm_sum_normalize", 0) != 0;
  rc.model.use_conv3d = ini.get_num("model.use_conv3d", 0) != 0;
  rc.model.fc_hidden = static_cast<int>(ini.get_num("model.fc_hidden", 128));

  rc.seed = static_cast<std::uint64_t>(ini.get_num("train.seed", 1));
  rc.epochs = static_cast<int>(ini.get_num("train.epochs", 10));
  rc.batch = static_cast<int>(ini.get_num("train.batch", 64));
  rc.adam.lr = ini.get_num("train.lr", 1e-4);
  rc.adam.drop_epoch = static_cast<int>(ini.get_num("train.drop_epoch", 4));
  rc.adam.drop_factor = ini.get_num("train.drop_factor", 0.1);
  rc.itw_g_noise = ini.get_num("train.itw_g_noise", 0.0);
  rc.out_dir = ini.get("out.dir", "");
  return rc;
}

IniFile RunConfig::to_ini() const {
  IniFile ini;
  ini.set("data.train", train_path);
  ini.set("data.heldout", heldout_path);
  ini.set("model.input_repr", transnet::input_repr_name(model.input_repr));
  ini.set("model.head", transnet::head_name(model.head));
  ini.set_num("model.dims", model.depth);
  ini.set_num("model.channels", model.channels);
  auto join = [](const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(v[i]);
    }
    return out;
  };
  ini.set("model.conv_widths", join(model.conv_widths));
  ini.set("model.conv_strides", join(model.conv_strides));
  ini.set_num("model.sigma", model.sigma);
  ini.set_num("model.z_range", model.z_range);
  ini.set_num("model.union_res", model.union_res);
  ini.set_num("model.weak_supervision", model.weak_supervision ? 1 : 0);
  ini.set_num("model.hm_sum_normalize", model.hm_sum_normalize ? 1 : 0);
  ini.set_num("model.use_conv3d", model.use_conv3d ? 1 : 0);
  ini.set_num("model.fc_hidden", model.fc_hidden);
  ini.set_num("train.seed", static_cast<double>(seed));
  ini.set_num("train.epochs", epochs);
  ini.set_num("train.batch", batch);
  ini.set_num("train.lr", adam.lr);
  ini.set_num("train.drop_epoch", adam.drop_epoch);
  ini.set_num("train.drop_factor", adam.drop_factor);
  ini.set_num("train.itw_g_noise", itw_g_noise);
  ini.set("out.dir", out_dir);
  return ini;
}

}  // namespace iw::cli
