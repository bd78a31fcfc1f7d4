#include "oodbatch/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "oodbatch/errors.hpp"

namespace oodbatch {

TaskSet::TaskSet() : names_{"Cardiomegaly", "Effusion", "Edema", "Consolidation"} {}

TaskSet::TaskSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ConfigError("task set must not be empty");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ConfigError("task name must not be empty");
    if (!seen.insert(n).second) throw ConfigError("duplicate task name: " + n);
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

Label parse_label(const std::string& token, std::size_t line_no) {
  if (token == "1") return Label::positive;
  if (token == "0") return Label::negative;
  if (token.empty()) return Label::missing;
  throw FormatError("label token '" + token + "' outside {0,1,\"\"}", line_no);
}

const char* label_token(Label l) {
  switch (l) {
    case Label::positive: return "1";
    case Label::negative: return "0";
    case Label::missing: return "";
  }
  return "";
}

}  // namespace

DatasetManifest read_manifest(std::istream& in, std::string name) {
  DatasetManifest m;
  m.name = std::move(name);

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError("malformed header: empty file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "image_ref")
    throw FormatError("malformed header: expected id,image_ref,<task>...", line_no);
  try {
    m.tasks = TaskSet(std::vector<std::string>(header.begin() + 2, header.end()));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed header: ") + e.what(), line_no);
  }

  const std::size_t arity = header.size();
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.size() != arity)
      throw FormatError("row arity mismatch: expected " + std::to_string(arity) + " fields, got " +
                            std::to_string(fields.size()),
                        line_no);
    ImageRecord rec;
    rec.id = fields[0];
    if (rec.id.empty()) throw FormatError("empty id", line_no);
    if (!ids.insert(rec.id).second) throw FormatError("duplicate id '" + rec.id + "'", line_no);

    const auto& ref = fields[1];
    const auto [ptr, ec] = std::from_chars(ref.data(), ref.data() + ref.size(), rec.image_ref);
    if (ref.empty() || ec != std::errc{} || ptr != ref.data() + ref.size())
      throw FormatError("invalid image_ref '" + ref + "'", line_no);

    rec.labels.reserve(arity - 2);
    for (std::size_t k = 2; k < arity; ++k) rec.labels.push_back(parse_label(fields[k], line_no));
    m.records.push_back(std::move(rec));
  }
  return m;
}

void write_manifest(std::ostream& out, const DatasetManifest& m) {
  out << "id,image_ref";
  for (const auto& t : m.tasks.names()) out << ',' << t;
  out << '\n';
  for (const auto& r : m.records) {
    if (r.id.find_first_of(",\n\r") != std::string::npos)
      throw FormatError("record id contains a delimiter: " + r.id);
    if (r.labels.size() != m.tasks.size())
      throw FormatError("record '" + r.id + "' label count differs from task count");
    out << r.id << ',' << r.image_ref;
    for (Label l : r.labels) out << ',' << label_token(l);
    out << '\n';
  }
}

ImagePack read_pack(std::istream& in) {
  detail::expect_magic(in, "XRPK");
  const auto version = detail::get_le<std::uint16_t>(in, "version");
  if (version != 1) throw FormatError("unsupported XRPK version " + std::to_string(version));
  ImagePack p;
  p.height = detail::get_le<std::uint16_t>(in, "height");
  p.width = detail::get_le<std::uint16_t>(in, "width");
  p.count = detail::get_le<std::uint32_t>(in, "count");
  if (p.height == 0 || p.width == 0) throw FormatError("XRPK height and width must be >= 1");
  p.pixels.resize(std::size_t{p.count} * p.plane_size());
  if (!in.read(reinterpret_cast<char*>(p.pixels.data()), static_cast<std::streamsize>(p.pixels.size())))
    throw FormatError("truncated XRPK pixel payload");
  detail::expect_eof(in);
  return p;
}

void write_pack(std::ostream& out, const ImagePack& p) {
  if (p.pixels.size() != std::size_t{p.count} * p.plane_size())
    throw FormatError("pack pixel buffer does not match count x height x width");
  out.write("XRPK", 4);
  detail::put_le<std::uint16_t>(out, 1);
  detail::put_le<std::uint16_t>(out, p.height);
  detail::put_le<std::uint16_t>(out, p.width);
  detail::put_le<std::uint32_t>(out, p.count);
  out.write(reinterpret_cast<const char*>(p.pixels.data()), static_cast<std::streamsize>(p.pixels.size()));
}

std::pair<DatasetManifest, ImagePack> load_manifest(const std::filesystem::path& manifest_path,
                                                    const std::filesystem::path& pack_path) {
  std::ifstream mf(manifest_path, std::ios::binary);
  if (!mf) throw FormatError("cannot open manifest " + manifest_path.string());
  std::ifstream pf(pack_path, std::ios::binary);
  if (!pf) throw FormatError("cannot open image pack " + pack_path.string());

  auto manifest = read_manifest(mf, manifest_path.stem().string());
  auto pack = read_pack(pf);
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (manifest.records[i].image_ref >= pack.count)
      throw FormatError("image_ref out of range (" + std::to_string(manifest.records[i].image_ref) +
                            " >= " + std::to_string(pack.count) + ")",
                        i + 2);
  }
  return {std::move(manifest), std::move(pack)};
}

void save_environment(const std::filesystem::path& dir, const Environment& env) {
  std::filesystem::create_directories(dir);
  const auto csv = dir / (env.name() + ".csv");
  const auto pack = dir / (env.name() + ".xrpk");
  std::ofstream mf(csv, std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write " + csv.string());
  write_manifest(mf, env.manifest);
  std::ofstream pf(pack, std::ios::binary);
  if (!pf) throw std::runtime_error("cannot write " + pack.string());
  write_pack(pf, env.pack);
  if (!mf.flush() || !pf.flush()) throw std::runtime_error("write failed in " + dir.string());
}

Environment load_environment(const std::filesystem::path& dir, const std::string& name) {
  auto [manifest, pack] = load_manifest(dir / (name + ".csv"), dir / (name + ".xrpk"));
  return {std::move(manifest), std::move(pack)};
}

DatasetManifest subset_sequential(const DatasetManifest& manifest, std::size_t n) {
  if (n == 0) throw ConfigError("subset size must be positive");
  if (n > manifest.size())
    throw ConfigError("subset size " + std::to_string(n) + " exceeds record count " +
                      std::to_string(manifest.size()) + " of " + manifest.name);
  DatasetManifest out;
  out.name = manifest.name;
  out.region = manifest.region;
  out.tasks = manifest.tasks;
  out.records.assign(manifest.records.begin(), manifest.records.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

Environment subset_sequential(const Environment& env, std::size_t n) {
  return {subset_sequential(env.manifest, n), env.pack};
}

std::vector<ClassCount> class_counts(const DatasetManifest& manifest) {
  std::vector<ClassCount> counts(manifest.tasks.size());
  for (const auto& r : manifest.records) {
    for (std::size_t t = 0; t < counts.size(); ++t) {
      switch (r.labels.at(t)) {
        case Label::positive: ++counts[t].n_positive; break;
        case Label::negative: ++counts[t].n_negative; break;
        case Label::missing: ++counts[t].n_missing; break;
      }
    }
  }
  return counts;
}

}  // namespace oodbatch
