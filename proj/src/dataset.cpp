#include "pinet/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pinet/error.hpp"
#include "pinet/random.hpp"

namespace pinet {

namespace fs = std::filesystem;
using nlohmann::json;

ImageKind parse_image_kind(const std::string& s) {
  if (s == "mask") return ImageKind::Mask;
  if (s == "shaded" || s == "object") return ImageKind::Shaded;
  if (s == "both") return ImageKind::Both;
  throw ConfigError("unknown image kind '" + s + "' (expected mask, shaded or both)");
}

std::string to_string(ImageKind k) {
  switch (k) {
    case ImageKind::Mask: return "mask";
    case ImageKind::Shaded: return "shaded";
    case ImageKind::Both: return "both";
  }
  return "?";
}

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) throw ValidationError("manifest: non-finite number");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string str(const std::string& s) { return json(s).dump(); }

std::string header_line(const DatasetManifest& m) {
  std::ostringstream o;
  const auto& k = m.intrinsics;
  const auto& s = m.sampler;
  o << "{\"format\":\"pinet-dataset\",\"version\":" << m.version << ",\"seed\":" << m.seed
    << ",\"kind\":" << str(to_string(m.kind)) << ",\"intrinsics\":{\"fx\":" << num(k.fx)
    << ",\"fy\":" << num(k.fy) << ",\"cx\":" << num(k.cx) << ",\"cy\":" << num(k.cy)
    << ",\"width\":" << k.width << ",\"height\":" << k.height << "},\"sampler\":{\"z_min\":" << num(s.z_min)
    << ",\"z_max\":" << num(s.z_max) << ",\"lateral_margin\":" << num(s.lateral_margin)
    << ",\"min_pixels\":" << s.min_pixels << ",\"seed\":" << s.seed << "},\"classes\":[";
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    const auto& cls = m.classes[c];
    if (c) o << ',';
    o << "{\"name\":" << str(cls.name) << ",\"mesh\":" << str(cls.mesh.generic_string())
      << ",\"cloud_seed\":" << cls.cloud_seed << ",\"cloud_points\":" << cls.cloud_points
      << ",\"cloud_mode\":" << str(cls.cloud_from_vertices ? "vertices" : "surface") << '}';
  }
  o << "]}";
  return o.str();
}

std::string record_line(const DatasetRecord& r) {
  std::ostringstream o;
  const auto& p = r.pose.position;
  const auto& q = r.pose.orientation.coeffs;
  o << "{\"id\":" << str(r.id) << ",\"class\":" << r.class_id << ",\"mask\":" << str(r.mask.generic_string());
  if (!r.shaded.empty()) o << ",\"shaded\":" << str(r.shaded.generic_string());
  o << ",\"position\":[" << num(p[0]) << ',' << num(p[1]) << ',' << num(p[2]) << "],\"quaternion\":["
    << num(q[0]) << ',' << num(q[1]) << ',' << num(q[2]) << ',' << num(q[3]) << "]}";
  return o.str();
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DatasetError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DatasetError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write manifest " + path.string());
  out << header_line(manifest) << '\n';
  for (const auto& r : manifest.records) out << record_line(r) << '\n';
  if (!out) throw ValidationError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(path.string() + ": empty manifest");
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": bad header: " + e.what());
  }
  const std::string where = path.string() + " header";
  if (field<std::string>(h, "format", where) != "pinet-dataset") throw DatasetError(where + ": not a dataset manifest");
  DatasetManifest m;
  m.version = field<int>(h, "version", where);
  if (m.version != kDatasetVersion) {
    throw DatasetError(where + ": unsupported version " + std::to_string(m.version));
  }
  m.seed = field<std::uint64_t>(h, "seed", where);
  m.kind = parse_image_kind(field<std::string>(h, "kind", where));
  const json k = field<json>(h, "intrinsics", where);
  m.intrinsics = {field<double>(k, "fx", where), field<double>(k, "fy", where), field<double>(k, "cx", where),
                  field<double>(k, "cy", where), field<int>(k, "width", where), field<int>(k, "height", where)};
  m.intrinsics.validate();
  const json s = field<json>(h, "sampler", where);
  m.sampler = {field<double>(s, "z_min", where), field<double>(s, "z_max", where),
               field<double>(s, "lateral_margin", where), field<int>(s, "min_pixels", where),
               field<std::uint64_t>(s, "seed", where)};
  for (const auto& c : field<json>(h, "classes", where)) {
    ClassSpec cls;
    cls.name = field<std::string>(c, "name", where);
    cls.mesh = field<std::string>(c, "mesh", where);
    cls.cloud_seed = field<std::uint64_t>(c, "cloud_seed", where);
    cls.cloud_points = field<int>(c, "cloud_points", where);
    cls.cloud_from_vertices = field<std::string>(c, "cloud_mode", where) == "vertices";
    m.classes.push_back(std::move(cls));
  }
  if (m.classes.empty()) throw DatasetError(where + ": no classes");

  std::set<std::string> ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string at = path.string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DatasetError(at + ": " + e.what());
    }
    DatasetRecord r;
    r.id = field<std::string>(j, "id", at);
    const std::string rec = "record '" + r.id + "' (" + at + ")";
    r.class_id = field<int>(j, "class", rec);
    if (r.class_id < 0 || r.class_id >= static_cast<int>(m.classes.size())) {
      throw DatasetError(rec + ": class id out of range");
    }
    r.mask = field<std::string>(j, "mask", rec);
    if (j.contains("shaded")) r.shaded = field<std::string>(j, "shaded", rec);
    const auto p = field<std::vector<double>>(j, "position", rec);
    const auto q = field<std::vector<double>>(j, "quaternion", rec);
    if (p.size() != 3 || q.size() != 4) throw DatasetError(rec + ": position/quaternion has the wrong length");
    r.pose.position = {p[0], p[1], p[2]};
    r.pose.orientation = Quaternion(q[0], q[1], q[2], q[3]);
    if (!is_canonical(r.pose.orientation)) throw DatasetError(rec + ": quaternion is not in canonical form");
    if (!ids.insert(r.id).second) throw DatasetError(rec + ": duplicate id");
    m.records.push_back(std::move(r));
  }
  return m;
}

DatasetManifest generate_dataset(const GenerateOptions& opts) {
  if (opts.classes.empty()) throw InvalidArgument("generate_dataset: no classes");
  if (opts.counts.size() != opts.classes.size()) throw InvalidArgument("generate_dataset: one count per class");
  for (int c : opts.counts) {
    if (c < 1) throw InvalidArgument("generate_dataset: counts must be >= 1");
  }
  opts.sampler.validate();
  opts.intrinsics.validate();
  const bool want_mask = true;
  const bool want_shaded = opts.kind != ImageKind::Mask;

  std::error_code ec;
  fs::create_directories(opts.out_dir / "masks", ec);
  if (want_shaded) fs::create_directories(opts.out_dir / "shaded", ec);
  fs::create_directories(opts.out_dir / "meshes", ec);
  if (ec || !fs::is_directory(opts.out_dir)) throw ValidationError("cannot create " + opts.out_dir.string());

  DatasetManifest m;
  m.seed = opts.seed;
  m.kind = opts.kind;
  m.intrinsics = opts.intrinsics;
  m.sampler = opts.sampler;
  m.sampler.seed = opts.seed;
  std::vector<TriangleMesh> meshes;
  for (const auto& cls : opts.classes) {
    meshes.push_back(load_obj(cls.mesh));
    ClassSpec stored = cls;
    stored.mesh = fs::path("meshes") / (cls.name + ".obj");
    fs::copy_file(cls.mesh, opts.out_dir / stored.mesh, fs::copy_options::overwrite_existing, ec);
    if (ec) throw ValidationError("cannot copy mesh into " + opts.out_dir.string());
    m.classes.push_back(std::move(stored));
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::size_t index = 0;
  for (std::size_t c = 0; c < opts.classes.size(); ++c) {
    for (int i = 0; i < opts.counts[c]; ++i, ++index) {
      Rng rng = derive_rng(opts.seed, index);
      char id[16];
      std::snprintf(id, sizeof(id), "%07zu", index);
      DatasetRecord r;
      r.id = id;
      r.class_id = static_cast<int>(c);
      r.pose = sample_pose(m.sampler, meshes[c], m.intrinsics, rng);
      if (want_mask) {
        r.mask = fs::path("masks") / (r.id + ".pgm");
        write_pgm(rasterize_silhouette(meshes[c], r.pose, m.intrinsics), opts.out_dir / r.mask);
      }
      if (want_shaded) {
        r.shaded = fs::path("shaded") / (r.id + ".pgm");
        write_pgm(render_shaded(meshes[c], r.pose, m.intrinsics), opts.out_dir / r.shaded);
      }
      m.records.push_back(std::move(r));
    }
  }
  write_manifest(m, opts.out_dir / "manifest.jsonl");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::clog << "generated " << m.records.size() << " records in " << secs << " s ("
            << (secs > 0 ? static_cast<double>(m.records.size()) / secs : 0.0) << " records/s)\n";
  return m;
}

std::shared_ptr<const Dataset> load_dataset(const fs::path& manifest_path) {
  auto d = std::make_shared<Dataset>();
  d->manifest = read_manifest(manifest_path);
  d->root = manifest_path.parent_path();
  for (const auto& cls : d->manifest.classes) {
    const fs::path mesh_path = d->root / cls.mesh;
    if (!fs::exists(mesh_path)) throw DatasetError("class '" + cls.name + "': missing mesh " + mesh_path.string());
    TriangleMesh mesh = load_obj(mesh_path);
    const PointCloud cloud = cls.cloud_from_vertices ? vertex_cloud(mesh, cls.name)
                                                     : sample_surface(mesh, cls.cloud_points, cls.cloud_seed, cls.name);
    d->clouds.push_back(cloud.points);
    d->meshes.push_back(std::move(mesh));
  }
  const auto& k = d->manifest.intrinsics;
  const bool shaded = std::all_of(d->manifest.records.begin(), d->manifest.records.end(),
                                  [](const DatasetRecord& r) { return !r.shaded.empty(); }) &&
                      !d->manifest.records.empty();
  for (const auto& r : d->manifest.records) {
    const fs::path mp = d->root / r.mask;
    if (!fs::exists(mp)) throw DatasetError("record '" + r.id + "': missing mask file " + mp.string());
    MaskImage mask = read_mask_pgm(mp);
    if (mask.width != k.width || mask.height != k.height) {
      throw DatasetError("record '" + r.id + "': mask size does not match the dataset intrinsics");
    }
    d->masks.push_back(std::move(mask));
    if (shaded) {
      const fs::path sp = d->root / r.shaded;
      if (!fs::exists(sp)) throw DatasetError("record '" + r.id + "': missing shaded file " + sp.string());
      d->shaded.push_back(read_pgm(sp));
    }
  }
  return d;
}

DatasetView DatasetView::all(std::shared_ptr<const Dataset> d) {
  DatasetView v;
  v.indices.resize(d->size());
  std::iota(v.indices.begin(), v.indices.end(), std::size_t{0});
  v.data = std::move(d);
  return v;
}

DatasetView DatasetView::first_per_class(std::size_t n) const {
  DatasetView out{data, {}};
  std::map<int, std::size_t> taken;
  for (std::size_t i = 0; i < size(); ++i) {
    auto& t = taken[record(i).class_id];
    if (t < n) {
      out.indices.push_back(indices[i]);
      ++t;
    }
  }
  return out;
}

DatasetView DatasetView::shuffled(std::uint64_t seed) const {
  DatasetView out = *this;
  Rng rng(seed);
  std::shuffle(out.indices.begin(), out.indices.end(), rng);
  return out;
}

std::pair<DatasetView, DatasetView> split(const DatasetView& view, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("split: fraction must be in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < view.size(); ++i) by_class[view.record(i).class_id].push_back(view.indices[i]);
  DatasetView train{view.data, {}}, test{view.data, {}};
  Rng rng(seed);
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      throw DatasetError("split: class " + std::to_string(cls) + " has fewer than 2 records");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<std::ptrdiff_t>(idx.size());
    const std::ptrdiff_t k = std::clamp<std::ptrdiff_t>(std::llround(train_fraction * static_cast<double>(n)), 1, n - 1);
    std::vector<std::size_t> a(idx.begin(), idx.begin() + k), b(idx.begin() + k, idx.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    train.indices.insert(train.indices.end(), a.begin(), a.end());
    test.indices.insert(test.indices.end(), b.begin(), b.end());
  }
  std::sort(train.indices.begin(), train.indices.end());
  std::sort(test.indices.begin(), test.indices.end());
  return {std::move(train), std::move(test)};
}

}  // namespace pinet
