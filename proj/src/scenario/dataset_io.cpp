#include "kpx/scenario/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include "json.hpp"

namespace kpx::scenario {

namespace {

using nlohmann::json;

void put_number(std::string& out, double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("dataset: cannot serialize a non-finite number");
  std::string s = fmt::format("{:.6f}", v);
  if (s == "-0.000000") s = "0.000000";
  out += s;
}

void put_point(std::string& out, const Point2& p) {
  out += '[';
  put_number(out, p[0]);
  out += ',';
  put_number(out, p[1]);
  out += ']';
}

void put_track(std::string& out, const std::vector<Point2>& track) {
  out += '[';
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (i) out += ',';
    put_point(out, track[i]);
  }
  out += ']';
}

void put_keypoints(std::string& out, const skeleton::KeypointsSequence& seq) {
  out += "{\"coords\":[";
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    if (t) out += ',';
    out += '[';
    for (std::size_t p = 0; p < seq.joints(); ++p) {
      if (p) out += ',';
      const auto v = seq.position(t, p);
      out += '[';
      put_number(out, v[0]);
      out += ',';
      put_number(out, v[1]);
      out += ',';
      put_number(out, v[2]);
      out += ']';
    }
    out += ']';
  }
  out += "],\"visibility\":[";
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    if (t) out += ',';
    out += '[';
    for (std::size_t p = 0; p < seq.joints(); ++p) {
      if (p) out += ',';
      put_number(out, seq.visibility(t, p));
    }
    out += ']';
  }
  out += "]}";
}

void put_polylines(std::string& out, const std::vector<Polyline>& lines) {
  out += '[';
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += ',';
    out += fmt::format("{{\"kind\":\"{}\",\"vectors\":[", to_string(lines[i].kind));
    for (std::size_t k = 0; k < lines[i].vectors.size(); ++k) {
      const auto& v = lines[i].vectors[k];
      if (k) out += ',';
      out += '[';
      put_number(out, v.start[0]);
      out += ',';
      put_number(out, v.start[1]);
      out += ',';
      put_number(out, v.end[0]);
      out += ',';
      put_number(out, v.end[1]);
      for (double a : v.attribute) {
        out += ',';
        put_number(out, a);
      }
      out += ']';
    }
    out += "]}";
  }
  out += ']';
}

std::string header_to_json(const skeleton::SkeletonSpec& spec) {
  json edges = json::array();
  for (const auto& [a, b] : spec.edges()) edges.push_back({a, b});
  json h = {
      {"format", kDatasetFormat},
      {"version", kDatasetVersion},
      {"skeleton", {{"joints", spec.joint_names()}, {"edges", edges}, {"center_joints", spec.center_joints()}}},
      {"T_h", kHistoryFrames},
      {"T_f", kFutureFrames},
      {"history_hz", static_cast<int>(kHistoryHz)},
      {"future_hz", static_cast<int>(kFutureHz)},
  };
  return h.dump();
}

std::vector<Point2> read_track(const json& j) {
  std::vector<Point2> track;
  for (const auto& p : j) {
    if (p.size() != 2) throw FormatError("track point must have 2 numbers");
    track.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return track;
}

skeleton::KeypointsSequence read_keypoints(const json& j, std::size_t joints) {
  const json& coords = j.at("coords");
  const json& vis = j.at("visibility");
  if (coords.size() != vis.size()) throw FormatError("keypoints coords and visibility frame counts differ");
  std::vector<double> c;
  std::vector<double> v;
  for (std::size_t t = 0; t < coords.size(); ++t) {
    if (coords[t].size() != joints || vis[t].size() != joints) {
      throw FormatError("keypoints frame has the wrong joint count");
    }
    for (std::size_t p = 0; p < joints; ++p) {
      const json& xyz = coords[t][p];
      if (xyz.size() != 3) throw FormatError("keypoint must have 3 coordinates");
      for (int a = 0; a < 3; ++a) c.push_back(xyz[a].get<double>());
      v.push_back(vis[t][p].get<double>());
    }
  }
  return skeleton::KeypointsSequence(coords.size(), joints, std::move(c), std::move(v));
}

std::vector<Polyline> read_polylines(const json& j) {
  std::vector<Polyline> lines;
  for (const auto& item : j) {
    Polyline line;
    const auto kind = polyline_kind_from_string(item.at("kind").get<std::string>());
    if (!kind) throw FormatError("unknown polyline kind " + item.at("kind").get<std::string>());
    line.kind = *kind;
    for (const auto& vec : item.at("vectors")) {
      if (vec.size() != 4 + kAttributeSize) throw FormatError("polyline vector must have 8 numbers");
      PolylineVector v;
      v.start = {vec[0].get<double>(), vec[1].get<double>()};
      v.end = {vec[2].get<double>(), vec[3].get<double>()};
      for (std::size_t a = 0; a < kAttributeSize; ++a) v.attribute[a] = vec[4 + a].get<double>();
      line.vectors.push_back(v);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

skeleton::SkeletonSpec header_from_json(const std::string& line) {
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("dataset header is not valid JSON: {}", e.what()));
  }
  if (!h.is_object() || h.value("format", "") != kDatasetFormat) {
    throw IncompatibleDataset("not a kpx scene dataset (missing format tag)");
  }
  const int version = h.value("version", -1);
  if (version != kDatasetVersion) {
    throw IncompatibleDataset(fmt::format("dataset version {} is not supported (expected {})", version, kDatasetVersion));
  }
  if (h.value("T_h", 0) != static_cast<int>(kHistoryFrames) || h.value("T_f", 0) != static_cast<int>(kFutureFrames)) {
    throw IncompatibleDataset("dataset horizons differ from T_h=20, T_f=8");
  }
  try {
    const json& sk = h.at("skeleton");
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : sk.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    return skeleton::SkeletonSpec(sk.at("joints").get<std::vector<std::string>>(), std::move(edges),
                                  sk.at("center_joints").get<std::vector<int>>());
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("dataset header skeleton: {}", e.what()));
  } catch (const std::invalid_argument& e) {
    throw FormatError(fmt::format("dataset header skeleton: {}", e.what()));
  }
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  std::string out;
  out.reserve(16384);
  out += fmt::format("{{\"scenario\":\"{}\",\"target_history\":", to_string(scene.kind));
  put_track(out, scene.target_history);
  out += ",\"target_future\":";
  put_track(out, scene.target_future);
  out += ",\"keypoints_history\":";
  put_keypoints(out, scene.keypoints_history);
  out += ",\"keypoints_future\":";
  put_keypoints(out, scene.keypoints_future);
  out += fmt::format(",\"label\":{},\"heading\":", scene.crossing_label);
  put_number(out, scene.heading);
  out += ",\"context_agents\":";
  put_polylines(out, scene.context_agents);
  out += ",\"roadgraph\":";
  put_polylines(out, scene.roadgraph);
  out += '}';
  return out;
}

Scene scene_from_json(const std::string& line, const skeleton::SkeletonSpec& spec) {
  Scene scene;
  try {
    const json j = json::parse(line);
    const auto kind = scenario_kind_from_string(j.at("scenario").get<std::string>());
    if (!kind) throw FormatError("unknown scenario kind " + j.at("scenario").get<std::string>());
    scene.kind = *kind;
    scene.target_history = read_track(j.at("target_history"));
    scene.target_future = read_track(j.at("target_future"));
    scene.keypoints_history = read_keypoints(j.at("keypoints_history"), spec.joint_count());
    scene.keypoints_future = read_keypoints(j.at("keypoints_future"), spec.joint_count());
    scene.crossing_label = j.at("label").get<int>();
    scene.heading = j.at("heading").get<double>();
    scene.context_agents = read_polylines(j.at("context_agents"));
    scene.roadgraph = read_polylines(j.at("roadgraph"));
  } catch (const json::exception& e) {
    throw FormatError(e.what());
  }
  try {
    validate_scene(scene, spec);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return scene;
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  out << header_to_json(dataset.skeleton) << '\n';
  for (const auto& scene : dataset.scenes) out << scene_to_json(scene) << '\n';
}

void write_dataset_file(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(out, dataset);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty dataset file");
  Dataset ds{header_from_json(line), {}};
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ds.scenes.push_back(scene_from_json(line, ds.skeleton));
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  return ds;
}

Dataset read_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in);
}

void generate_dataset(std::size_t n, const KindMix& mix, std::uint64_t seed,
                      const std::filesystem::path& path) {
  write_dataset_file(path, Dataset{skeleton::SkeletonSpec::default13(), generate_scenes(n, mix, seed)});
}

}  // namespace kpx::scenario
