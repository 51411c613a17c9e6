#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "iw/errors.hpp"
#include "iw/synth.hpp"

namespace iw::synth {

namespace {

constexpr const char* kSchema = "iw-scene/1";

void append_values(std::string& line, const char* key,
                   std::span<const double> values) {
  line += ' ';
  line += key;
  line += '=';
  char buf[32];
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) line += ',';
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    line += buf;
  }
}

void params_values(const hand::HandParams& p, std::vector<double>& theta,
                   std::vector<double>& beta) {
  theta.clear();
  beta.clear();
  for (const auto& v : p.theta) {
    theta.push_back(v.x);
    theta.push_back(v.y);
    theta.push_back(v.z);
  }
  beta.assign(p.beta.begin(), p.beta.end());
}

struct FieldReader {
  int line_no;
  std::string key;
  std::vector<double> values;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("line " + std::to_string(line_no) + ", field " + key +
                     ": " + what);
  }

  void expect(size_t n) const {
    if (values.size() != n)
      fail("expected " + std::to_string(n) + " values, got " +
           std::to_string(values.size()));
  }
};

}  // namespace

void write_dataset(std::span<const SceneRecord> scenes,
                   const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_dataset: cannot open " + path.string());
  os << kSchema << '\n';

  std::vector<double> theta, beta;
  for (const auto& s : scenes) {
    std::string line = "dom=";
    line += domain_name(s.domain);
    line += s.interacting ? " int=1" : " int=0";
    line += " vis=";
    line += s.visible_r ? '1' : '0';
    line += ',';
    line += s.visible_l ? '1' : '0';

    const double cam[6] = {s.camera.fx, s.camera.fy, s.camera.cx, s.camera.cy,
                           static_cast<double>(s.camera.width),
                           static_cast<double>(s.camera.height)};
    append_values(line, "cam", cam);

    params_values(s.params_r, theta, beta);
    append_values(line, "thr", theta);
    append_values(line, "ber", beta);
    params_values(s.params_l, theta, beta);
    append_values(line, "thl", theta);
    append_values(line, "bel", beta);

    const double g[3] = {s.g_r.x, s.g_r.y, s.g_r.z};
    const double t[3] = {s.t_gt.x, s.t_gt.y, s.t_gt.z};
    append_values(line, "g", g);
    append_values(line, "t", t);

    const double br[4] = {s.box_r.center.x, s.box_r.center.y, s.box_r.size.x,
                          s.box_r.size.y};
    const double bl[4] = {s.box_l.center.x, s.box_l.center.y, s.box_l.size.x,
                          s.box_l.size.y};
    append_values(line, "boxr", br);
    append_values(line, "boxl", bl);

    std::vector<double> j2(hand::kJoints * 2);
    for (int j = 0; j < hand::kJoints; ++j) {
      j2[static_cast<size_t>(j) * 2] = s.joints2d_r[static_cast<size_t>(j)].x;
      j2[static_cast<size_t>(j) * 2 + 1] = s.joints2d_r[static_cast<size_t>(j)].y;
    }
    append_values(line, "j2r", j2);
    for (int j = 0; j < hand::kJoints; ++j) {
      j2[static_cast<size_t>(j) * 2] = s.joints2d_l[static_cast<size_t>(j)].x;
      j2[static_cast<size_t>(j) * 2 + 1] = s.joints2d_l[static_cast<size_t>(j)].y;
    }
    append_values(line, "j2l", j2);

    std::vector<double> p25(hand::kJoints * 3);
    for (int j = 0; j < hand::kJoints; ++j) {
      p25[static_cast<size_t>(j) * 3] = s.pose_r.j[static_cast<size_t>(j)].x;
      p25[static_cast<size_t>(j) * 3 + 1] = s.pose_r.j[static_cast<size_t>(j)].y;
      p25[static_cast<size_t>(j) * 3 + 2] = s.pose_r.j[static_cast<size_t>(j)].z;
    }
    append_values(line, "pr", p25);
    for (int j = 0; j < hand::kJoints; ++j) {
      p25[static_cast<size_t>(j) * 3] = s.pose_l.j[static_cast<size_t>(j)].x;
      p25[static_cast<size_t>(j) * 3 + 1] = s.pose_l.j[static_cast<size_t>(j)].y;
      p25[static_cast<size_t>(j) * 3 + 2] = s.pose_l.j[static_cast<size_t>(j)].z;
    }
    append_values(line, "pl", p25);

    os << line << '\n';
  }
  if (!os) throw Error("write_dataset: write failed for " + path.string());
}

std::vector<SceneRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_dataset: cannot open " + path.string());

  std::string line;
  if (!std::getline(is, line) || line != kSchema)
    throw ParseError("line 1, field schema: expected '" + std::string(kSchema) +
                     "'");

  std::vector<SceneRecord> out;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    SceneRecord s;
    std::string dom;
    bool saw_dom = false;

    std::istringstream ls(line);
    std::string token;
    // Collected numeric fields by key.
    auto parse_numbers = [&](FieldReader& fr, const std::string& text) {
      size_t pos = 0;
      while (pos <= text.size()) {
        const size_t comma = text.find(',', pos);
        const std::string item =
            text.substr(pos, comma == std::string::npos ? std::string::npos
                                                        : comma - pos);
        if (item.empty()) fr.fail("empty value");
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (end == item.c_str() || *end != '\0')
          fr.fail("bad number '" + item + "'");
        fr.values.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    };

    while (ls >> token) {
      const size_t eq = token.find('=');
      if (eq == std::string::npos)
        throw ParseError("line " + std::to_string(line_no) +
                         ", field ?: token '" + token + "' has no '='");
      FieldReader fr{line_no, token.substr(0, eq), {}};
      const std::string text = token.substr(eq + 1);

      if (fr.key == "dom") {
        dom = text;
        saw_dom = true;
        continue;
      }
      parse_numbers(fr, text);

      auto to_vec3 = [&](size_t base) {
        return geom::Vec3{fr.values[base], fr.values[base + 1],
                          fr.values[base + 2]};
      };

      if (fr.key == "int") {
        fr.expect(1);
        s.interacting = fr.values[0] != 0;
      } else if (fr.key == "vis") {
        fr.expect(2);
        s.visible_r = fr.values[0] != 0;
        s.visible_l = fr.values[1] != 0;
      } else if (fr.key == "cam") {
        fr.expect(6);
        s.camera = {fr.values[0], fr.values[1], fr.values[2], fr.values[3],
                    static_cast<int>(fr.values[4]),
                    static_cast<int>(fr.values[5])};
      } else if (fr.key == "thr" || fr.key == "thl") {
        fr.expect(48);
        auto& p = fr.key == "thr" ? s.params_r : s.params_l;
        for (int k = 0; k < hand::kBones; ++k)
          p.theta[static_cast<size_t>(k)] = to_vec3(static_cast<size_t>(k) * 3);
      } else if (fr.key == "ber" || fr.key == "bel") {
        fr.expect(10);
        auto& p = fr.key == "ber" ? s.params_r : s.params_l;
        std::copy(fr.values.begin(), fr.values.end(), p.beta.begin());
      } else if (fr.key == "g") {
        fr.expect(3);
        s.g_r = to_vec3(0);
      } else if (fr.key == "t") {
        fr.expect(3);
        s.t_gt = to_vec3(0);
      } else if (fr.key == "boxr" || fr.key == "boxl") {
        fr.expect(4);
        auto& b = fr.key == "boxr" ? s.box_r : s.box_l;
        b = {{fr.values[0], fr.values[1]}, {fr.values[2], fr.values[3]}};
      } else if (fr.key == "j2r" || fr.key == "j2l") {
        fr.expect(static_cast<size_t>(hand::kJoints) * 2);
        auto& a = fr.key == "j2r" ? s.joints2d_r : s.joints2d_l;
        for (int j = 0; j < hand::kJoints; ++j)
          a[static_cast<size_t>(j)] = {fr.values[static_cast<size_t>(j) * 2],
                                       fr.values[static_cast<size_t>(j) * 2 + 1]};
      } else if (fr.key == "pr" || fr.key == "pl") {
        fr.expect(static_cast<size_t>(hand::kJoints) * 3);
        auto& p = fr.key == "pr" ? s.pose_r : s.pose_l;
        for (int j = 0; j < hand::kJoints; ++j)
          p.j[static_cast<size_t>(j)] = to_vec3(static_cast<size_t>(j) * 3);
      } else {
        fr.fail("unknown field");
      }
    }

    if (!saw_dom)
      throw ParseError("line " + std::to_string(line_no) +
                       ", field dom: missing");
    try {
      s.domain = domain_from_name(dom);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ", field dom: " +
                       e.what());
    }

    s.params_r.handedness = hand::Handedness::right;
    s.params_l.handedness = hand::Handedness::left;
    // Pose spaces are derived state; rebuild them from the stored boxes.
    s.pose_r.space = crop::prepare_hand_crop(s.box_r, false).space();
    s.pose_l.space = crop::prepare_hand_crop(s.box_l, true).space();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace iw::synth
