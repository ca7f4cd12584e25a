#include "maq2l/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "maq2l/error.hpp"

namespace maq2l {

namespace {
constexpr char kMagic[4] = {'M', 'A', 'Q', 'C'};
constexpr std::uint32_t kVersion = 1;

std::string section_of(const std::string& name) { return name.substr(0, name.find('.')); }

void write_string(std::ostream& out, const std::string& s) {
  io::write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = io::read_u64(in);
  if (n > (1ULL << 32)) throw IoError("checkpoint string length is implausible");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IoError("truncated checkpoint");
  return s;
}
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& p : tensors)
    if (p.name == name) return &p.tensor;
  return nullptr;
}

ParamList Checkpoint::section(const std::string& name) const {
  ParamList out;
  for (const auto& p : tensors)
    if (section_of(p.name) == name) out.push_back(p);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, std::vector<const NamedParam*>>> sections;
  for (const auto& p : ckpt.tensors) {
    const std::string s = section_of(p.name);
    auto it = std::find_if(sections.begin(), sections.end(), [&](const auto& e) { return e.first == s; });
    if (it == sections.end()) {
      sections.push_back({s, {}});
      it = sections.end() - 1;
    }
    it->second.push_back(&p);
  }
  std::ostringstream out;
  out.write(kMagic, 4);
  io::write_u32(out, kVersion);
  write_string(out, ckpt.config);
  io::write_u32(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, params] : sections) {
    write_string(out, name);
    io::write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const NamedParam* p : params) {
      write_string(out, p->name);
      save_tensor(out, p->tensor);
    }
  }
  // Write to a sibling and rename so a crash never leaves a torn file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write checkpoint " + tmp.string());
    const std::string bytes = out.str();
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) throw IoError(path.string() + " is not a checkpoint file");
  if (io::read_u32(in) != kVersion) throw IoError(path.string() + ": unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.config = read_string(in);
  const std::uint32_t sections = io::read_u32(in);
  for (std::uint32_t s = 0; s < sections; ++s) {
    const std::string section = read_string(in);
    const std::uint32_t count = io::read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = read_string(in);
      if (section_of(name) != section) throw IoError("tensor " + name + " filed under section " + section);
      ckpt.tensors.push_back({std::move(name), load_tensor(in)});
    }
  }
  return ckpt;
}

}  // namespace maq2l
