#include "dba/bal_io.hpp"

#include <Eigen/Geometry>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "dba/errors.hpp"

namespace dba {

namespace {

std::string format_double(double v) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific, 16);
  return std::string(buf, res.ptr);
}

struct Token {
  std::string_view text;
  int line;
};

class TokenStream {
 public:
  explicit TokenStream(const std::string& text) {
    int line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == '\n') {
        ++line;
        ++i;
      } else if (std::isspace(static_cast<unsigned char>(text[i]))) {
        ++i;
      } else {
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
          ++i;
        }
        tokens_.push_back({std::string_view(text).substr(start, i - start), line});
      }
    }
  }

  bool done() const { return pos_ >= tokens_.size(); }

  int line() const { return done() ? (tokens_.empty() ? 1 : tokens_.back().line) : tokens_[pos_].line; }

  const Token* peek() const { return done() ? nullptr : &tokens_[pos_]; }

  Token next(const std::string& what) {
    if (done()) {
      throw ParseError("unexpected end of file, expected " + what, line());
    }
    return tokens_[pos_++];
  }

  long long read_int(const std::string& what) {
    const Token tok = next(what);
    long long value = 0;
    const auto res = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
    if (res.ec != std::errc{} || res.ptr != tok.text.data() + tok.text.size()) {
      throw ParseError("expected " + what + ", got '" + std::string(tok.text) + "'", tok.line);
    }
    return value;
  }

  double read_double(const std::string& what) {
    const Token tok = next(what);
    double value = 0;
    const auto res = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
    if (res.ec != std::errc{} || res.ptr != tok.text.data() + tok.text.size()) {
      throw ParseError("expected " + what + ", got '" + std::string(tok.text) + "'", tok.line);
    }
    return value;
  }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

enum class RotationEncoding { kEuler, kAngleAxis };

Vec3 euler_from_angle_axis(const Vec3& aa) {
  const double theta = aa.norm();
  if (theta == 0.0) {
    return Vec3::Zero();
  }
  const Mat3 R = Eigen::AngleAxisd(theta, aa / theta).toRotationMatrix();
  return euler_from_rotation(R);
}

}  // namespace

ParsedProblem parse_problem_text(const std::string& text) {
  TokenStream ts(text);

  RotationEncoding encoding = RotationEncoding::kEuler;
  if (const Token* tok = ts.peek(); tok != nullptr && tok->text == "rotation") {
    ts.next("rotation flag");
    const Token value = ts.next("rotation encoding (euler | angle-axis)");
    if (value.text == "euler") {
      encoding = RotationEncoding::kEuler;
    } else if (value.text == "angle-axis") {
      encoding = RotationEncoding::kAngleAxis;
    } else {
      throw ParseError("unknown rotation encoding '" + std::string(value.text) + "'", value.line);
    }
  }

  const long long m = ts.read_int("camera count");
  const long long n = ts.read_int("point count");
  const long long l = ts.read_int("observation count");
  if (m < 1 || n < 1 || l < 1) {
    throw ValidationError("header counts must all be >= 1");
  }

  std::vector<Observation> observations;
  observations.reserve(l);
  for (long long k = 0; k < l; ++k) {
    const std::string what = "observation " + std::to_string(k);
    Observation obs;
    obs.cam_id = static_cast<int>(ts.read_int(what + " camera index"));
    obs.point_id = static_cast<int>(ts.read_int(what + " point index"));
    obs.z.x() = ts.read_double(what + " u");
    obs.z.y() = ts.read_double(what + " v");
    observations.push_back(obs);
  }

  std::vector<CameraParams> cameras;
  cameras.reserve(m);
  for (long long j = 0; j < m; ++j) {
    const std::string what = "camera " + std::to_string(j);
    Vec3 rot;
    for (int k = 0; k < 3; ++k) {
      rot[k] = ts.read_double(what + " rotation parameter " + std::to_string(k));
    }
    CameraParams cam;
    if (encoding == RotationEncoding::kEuler) {
      cam.alpha = rot[0];
      cam.beta = rot[1];
      cam.gamma = rot[2];
    } else {
      const Vec3 angles = euler_from_angle_axis(rot);
      cam.alpha = angles[0];
      cam.beta = angles[1];
      cam.gamma = angles[2];
    }
    for (int k = 0; k < 3; ++k) {
      cam.t[k] = ts.read_double(what + " translation " + std::to_string(k));
    }
    cam.f = ts.read_double(what + " focal length");
    const double k1 = ts.read_double(what + " distortion k1");
    const double k2 = ts.read_double(what + " distortion k2");
    if (k1 != 0.0 || k2 != 0.0) {
      throw ValidationError(what + " has nonzero distortion; this camera model has none");
    }
    cameras.push_back(cam);
  }

  std::vector<ScenePoint> points;
  points.reserve(n);
  for (long long i = 0; i < n; ++i) {
    const std::string what = "point " + std::to_string(i);
    ScenePoint p;
    for (int k = 0; k < 3; ++k) {
      p[k] = ts.read_double(what + " coordinate " + std::to_string(k));
    }
    points.push_back(p);
  }

  if (!ts.done()) {
    throw ParseError("unexpected trailing data", ts.line());
  }

  ParsedProblem out;
  out.problem = Problem::create(cameras, points, std::move(observations));
  out.init = {std::move(cameras), std::move(points)};
  return out;
}

ParsedProblem parse_problem(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_problem_text(buf.str());
}

std::string serialize_problem_text(const Problem& problem, const ParamState& state) {
  if (problem.num_observations() == 0 || problem.num_cameras() == 0 || problem.num_points() == 0) {
    throw ValidationError("refusing to serialize an empty problem");
  }
  if (static_cast<int>(state.cameras.size()) != problem.num_cameras() ||
      static_cast<int>(state.points.size()) != problem.num_points()) {
    throw SizeMismatch("state sizes do not match the problem");
  }

  std::string out;
  out.reserve(64 * (problem.num_observations() + 3 * problem.num_cameras() +
                    problem.num_points()));
  out += "rotation euler\n";
  out += std::to_string(problem.num_cameras()) + " " + std::to_string(problem.num_points()) +
         " " + std::to_string(problem.num_observations()) + "\n";
  for (const Observation& obs : problem.observations) {
    out += std::to_string(obs.cam_id) + " " + std::to_string(obs.point_id) + " " +
           format_double(obs.z.x()) + " " + format_double(obs.z.y()) + "\n";
  }
  for (const CameraParams& cam : state.cameras) {
    out += format_double(cam.alpha) + "\n" + format_double(cam.beta) + "\n" +
           format_double(cam.gamma) + "\n";
    for (int k = 0; k < 3; ++k) {
      out += format_double(cam.t[k]) + "\n";
    }
    out += format_double(cam.f) + "\n";
    out += format_double(0.0) + "\n" + format_double(0.0) + "\n";
  }
  for (const ScenePoint& p : state.points) {
    for (int k = 0; k < 3; ++k) {
      out += format_double(p[k]) + "\n";
    }
  }
  return out;
}

void serialize_problem(const Problem& problem, const ParamState& state,
                       const std::filesystem::path& path) {
  const std::string text = serialize_problem_text(problem, state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open '" + path.string() + "' for writing");
  }
  out << text;
  if (!out) {
    throw Error("write failed for '" + path.string() + "'");
  }
}

}  // namespace dba
