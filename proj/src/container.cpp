#include "fiberinfer/container.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fiberinfer {

namespace {

constexpr char kMagic[8] = {'F', 'I', 'B', 'T', 'E', 'N', 'S', '1'};

static_assert(std::endian::native == std::endian::little,
              "container assumes a little-endian host");

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw InvalidInput("container: negative dimension");
    n *= d;
  }
  return n;
}

}  // namespace

void TensorContainer::add_f32(const std::string& name,
                              std::vector<std::int64_t> shape,
                              std::vector<float> data) {
  if (element_count(shape) != static_cast<std::int64_t>(data.size()))
    throw InvalidInput("container: shape/data mismatch for " + name);
  Field f;
  f.name = name;
  f.dtype = "f32";
  f.shape = std::move(shape);
  f.f32 = std::move(data);
  fields_.push_back(std::move(f));
}

void TensorContainer::add_i32(const std::string& name,
                              std::vector<std::int64_t> shape,
                              std::vector<std::int32_t> data) {
  if (element_count(shape) != static_cast<std::int64_t>(data.size()))
    throw InvalidInput("container: shape/data mismatch for " + name);
  Field f;
  f.name = name;
  f.dtype = "i32";
  f.shape = std::move(shape);
  f.i32 = std::move(data);
  fields_.push_back(std::move(f));
}

const TensorContainer::Field& TensorContainer::find(const std::string& name) const {
  for (const Field& f : fields_)
    if (f.name == name) return f;
  throw InvalidInput("container: missing field " + name);
}

bool TensorContainer::has(const std::string& name) const {
  for (const Field& f : fields_)
    if (f.name == name) return true;
  return false;
}

const std::vector<float>& TensorContainer::f32(const std::string& name) const {
  const Field& f = find(name);
  if (f.dtype != "f32") throw InvalidInput("container: " + name + " is not f32");
  return f.f32;
}

const std::vector<std::int32_t>& TensorContainer::i32(const std::string& name) const {
  const Field& f = find(name);
  if (f.dtype != "i32") throw InvalidInput("container: " + name + " is not i32");
  return f.i32;
}

const std::vector<std::int64_t>& TensorContainer::shape(const std::string& name) const {
  return find(name).shape;
}

std::vector<char> TensorContainer::serialize() const {
  nlohmann::json header;
  header["version"] = 1;
  header["meta"] = meta;
  header["fields"] = nlohmann::json::array();
  for (const Field& f : fields_)
    header["fields"].push_back({{"name", f.name}, {"dtype", f.dtype}, {"shape", f.shape}});
  const std::string js = header.dump();

  std::vector<char> out;
  out.reserve(js.size() + 64);
  out.insert(out.end(), kMagic, kMagic + 8);
  const std::uint64_t len = js.size();
  out.insert(out.end(), reinterpret_cast<const char*>(&len),
             reinterpret_cast<const char*>(&len) + 8);
  out.insert(out.end(), js.begin(), js.end());
  for (const Field& f : fields_) {
    const char* p;
    std::size_t bytes;
    if (f.dtype == "f32") {
      p = reinterpret_cast<const char*>(f.f32.data());
      bytes = f.f32.size() * sizeof(float);
    } else {
      p = reinterpret_cast<const char*>(f.i32.data());
      bytes = f.i32.size() * sizeof(std::int32_t);
    }
    out.insert(out.end(), p, p + bytes);
  }
  return out;
}

void TensorContainer::save(const std::string& path) const {
  const std::vector<char> bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInput("short write to " + path);
}

std::uint64_t TensorContainer::content_hash() const {
  const std::vector<char> bytes = serialize();
  return fnv1a(bytes.data(), bytes.size());
}

TensorContainer TensorContainer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw InvalidInput(path + ": not a tensor container");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string js(len, '\0');
  in.read(js.data(), static_cast<std::streamsize>(len));
  if (!in) throw InvalidInput(path + ": truncated header");
  nlohmann::json header = nlohmann::json::parse(js);

  TensorContainer c;
  c.meta = header.value("meta", nlohmann::json::object());
  for (const auto& fd : header.at("fields")) {
    const std::string name = fd.at("name");
    const std::string dtype = fd.at("dtype");
    std::vector<std::int64_t> shape = fd.at("shape").get<std::vector<std::int64_t>>();
    const std::int64_t count = element_count(shape);
    if (dtype == "f32") {
      std::vector<float> data(count);
      in.read(reinterpret_cast<char*>(data.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
      c.add_f32(name, std::move(shape), std::move(data));
    } else if (dtype == "i32") {
      std::vector<std::int32_t> data(count);
      in.read(reinterpret_cast<char*>(data.data()),
              static_cast<std::streamsize>(count * sizeof(std::int32_t)));
      c.add_i32(name, std::move(shape), std::move(data));
    } else {
      throw InvalidInput(path + ": unknown dtype " + dtype);
    }
    if (!in) throw InvalidInput(path + ": truncated data for " + name);
  }
  return c;
}

void save_dataset(const std::string& path, const AcquisitionScheme& scheme,
                  const std::vector<DatasetRecord>& records,
                  const nlohmann::json& extra_meta) {
  const std::int64_t n_records = static_cast<std::int64_t>(records.size());
  const std::int64_t total = scheme.total_measurements();

  TensorContainer c;
  c.meta = extra_meta;
  {
    std::ostringstream ss;
    char buf[160];
    for (const Shell& sh : scheme.shells())
      for (const Vector3d& d : sh.directions) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", d.x(), d.y(),
                      d.z(), sh.b * 1e3);
        ss << buf;
      }
    c.meta["scheme_table"] = ss.str();
    c.meta["scheme_hash"] = hash_hex(scheme.content_hash());
    c.meta["n_records"] = n_records;
  }

  std::vector<float> signals(static_cast<std::size_t>(n_records * total));
  std::vector<std::int32_t> n_fibers(records.size());
  std::vector<float> orient(records.size() * 9, 0.0f);
  std::vector<float> kernels(records.size() * 15, 0.0f);
  bool any_kappa = false;
  for (const DatasetRecord& r : records) any_kappa |= !r.config.kappa.empty();
  std::vector<float> kappa;
  if (any_kappa) kappa.assign(records.size() * 3, 0.0f);

  int counts[3] = {0, 0, 0};
  for (std::size_t r = 0; r < records.size(); ++r) {
    const DatasetRecord& rec = records[r];
    rec.signals.validate_against(scheme);
    std::int64_t off = static_cast<std::int64_t>(r) * total;
    for (const VectorXd& s : rec.signals.shells)
      for (Eigen::Index i = 0; i < s.size(); ++i)
        signals[static_cast<std::size_t>(off++)] = static_cast<float>(s[i]);
    n_fibers[r] = rec.config.n;
    counts[rec.config.n - 1]++;
    for (int i = 0; i < rec.config.n; ++i) {
      for (int d = 0; d < 3; ++d)
        orient[r * 9 + i * 3 + d] = static_cast<float>(rec.config.orientations[i][d]);
      const KernelParams& k = rec.config.kernels[i];
      const double vals[5] = {k.d_a, k.d_e_par, k.d_e_perp, k.z1, k.z2};
      for (int d = 0; d < 5; ++d)
        kernels[r * 15 + i * 5 + d] = static_cast<float>(vals[d]);
      if (any_kappa && !rec.config.kappa.empty())
        kappa[r * 3 + i] = static_cast<float>(rec.config.kappa[i]);
    }
  }
  c.meta["counts_per_n"] = {counts[0], counts[1], counts[2]};
  c.add_f32("signals", {n_records, total}, std::move(signals));
  c.add_i32("n_fibers", {n_records}, std::move(n_fibers));
  c.add_f32("orientations", {n_records, 3, 3}, std::move(orient));
  c.add_f32("kernels", {n_records, 3, 5}, std::move(kernels));
  if (any_kappa) c.add_f32("kappa", {n_records, 3}, std::move(kappa));
  c.save(path);
}

LoadedDataset load_dataset(const std::string& path) {
  TensorContainer c = TensorContainer::load(path);
  LoadedDataset out;
  out.meta = c.meta;
  out.file_hash = c.content_hash();
  {
    const std::string table = c.meta.at("scheme_table");
    std::istringstream ss(table);
    out.scheme = AcquisitionScheme::parse_gradient_table(ss, path + " (embedded)");
  }
  const auto& signals = c.f32("signals");
  const auto& nf = c.i32("n_fibers");
  const auto& orient = c.f32("orientations");
  const auto& kernels = c.f32("kernels");
  const bool has_kappa = c.has("kappa");
  const std::int64_t total = c.shape("signals")[1];
  if (total != out.scheme.total_measurements())
    throw InvalidInput(path + ": signal width does not match embedded scheme");

  out.records.resize(nf.size());
  for (std::size_t r = 0; r < nf.size(); ++r) {
    DatasetRecord& rec = out.records[r];
    std::int64_t off = static_cast<std::int64_t>(r) * total;
    for (const Shell& sh : out.scheme.shells()) {
      VectorXd s(sh.count());
      for (int i = 0; i < sh.count(); ++i)
        s[i] = signals[static_cast<std::size_t>(off++)];
      rec.signals.shells.push_back(std::move(s));
    }
    rec.config.n = nf[r];
    rec.config.orientations.resize(rec.config.n);
    rec.config.kernels.resize(rec.config.n);
    bool rec_has_kappa = false;
    for (int i = 0; has_kappa && i < rec.config.n; ++i)
      rec_has_kappa |= c.f32("kappa")[r * 3 + i] > 0.0f;
    if (rec_has_kappa) rec.config.kappa.resize(rec.config.n);
    for (int i = 0; i < rec.config.n; ++i) {
      for (int d = 0; d < 3; ++d)
        rec.config.orientations[i][d] = orient[r * 9 + i * 3 + d];
      rec.config.orientations[i].normalize();
      KernelParams& k = rec.config.kernels[i];
      k.d_a = kernels[r * 15 + i * 5 + 0];
      k.d_e_par = kernels[r * 15 + i * 5 + 1];
      k.d_e_perp = kernels[r * 15 + i * 5 + 2];
      k.z1 = kernels[r * 15 + i * 5 + 3];
      k.z2 = kernels[r * 15 + i * 5 + 4];
      if (rec_has_kappa) rec.config.kappa[i] = c.f32("kappa")[r * 3 + i];
    }
  }
  return out;
}

}  // namespace fiberinfer
