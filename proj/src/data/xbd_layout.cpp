#include <iostream>
#include <map>

#include "cdfnet/data.hpp"
#include "cdfnet/image_io.hpp"

namespace cdfnet {

namespace {

bool strip_suffix(const std::string& name, const std::string& suffix, std::string& stem) {
  if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
    return false;
  stem = name.substr(0, name.size() - suffix.size());
  return true;
}

}  // namespace

SamplePair PairRef::load() const {
  SamplePair s;
  s.id = id;
  s.pre = from_image(read_png(pre_path));
  s.post = from_image(read_png(post_path));
  s.mask = mask_from_image(read_png(mask_path));
  if (s.pre.shape() != s.post.shape())
    throw DatasetError("pair " + id + ": pre image " + shape_to_string(s.pre.shape()) + " and post image " +
                       shape_to_string(s.post.shape()) + " differ in size");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw DatasetError(e.what());
  }
  return s;
}

PairIndex load_xbd_layout(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const auto images = root / "images";
  const auto targets = root / "targets";
  if (!fs::is_directory(images)) throw DatasetError("no images/ directory under " + root.string());

  struct Parts {
    fs::path pre, post, mask;
  };
  std::map<std::string, Parts> by_id;  // ordered: index is lexicographic by id
  for (const auto& entry : fs::directory_iterator(images)) {
    const auto name = entry.path().filename().string();
    std::string stem;
    if (strip_suffix(name, "_pre_disaster.png", stem)) by_id[stem].pre = entry.path();
    else if (strip_suffix(name, "_post_disaster.png", stem)) by_id[stem].post = entry.path();
  }
  if (fs::is_directory(targets)) {
    for (const auto& entry : fs::directory_iterator(targets)) {
      std::string stem;
      if (strip_suffix(entry.path().filename().string(), "_post_disaster_target.png", stem))
        by_id[stem].mask = entry.path();
    }
  }

  PairIndex index;
  for (const auto& [id, parts] : by_id) {
    if (parts.pre.empty() || parts.post.empty() || parts.mask.empty()) {
      std::string missing;
      if (parts.pre.empty()) missing += " pre";
      if (parts.post.empty()) missing += " post";
      if (parts.mask.empty()) missing += " target";
      index.skipped.push_back(id + " (missing" + missing + ")");
      std::clog << "[data] skipping " << id << ": missing" << missing << '\n';
      continue;
    }
    index.pairs.push_back(PairRef{id, parts.pre, parts.post, parts.mask});
  }
  if (index.pairs.empty()) throw DatasetError("no complete pre/post/target pairs under " + root.string());
  return index;
}

std::vector<SamplePair> load_all(const PairIndex& index) {
  std::vector<SamplePair> out;
  out.reserve(index.pairs.size());
  for (const auto& ref : index.pairs) out.push_back(ref.load());
  return out;
}

}  // namespace cdfnet
