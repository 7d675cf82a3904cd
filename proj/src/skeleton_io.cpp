#include "menv/skeleton_io.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"
#include "menv/text_io.hpp"

namespace menv {

using nlohmann::json;

void check_pose(const SkeletonPose& pose) {
  for (std::size_t i = 0; i < kPoseDim; ++i) {
    double v = pose.coords[i];
    if (!std::isfinite(v)) throw RangeError("non-finite coordinate at index " + std::to_string(i));
    if (std::abs(v) > kCoordLimit + kRangeTolerance)
      throw RangeError("coordinate " + std::to_string(i) + " = " + format_double(v) + " outside [-6, 6]");
  }
}

namespace {

std::vector<std::size_t> expand_coords(const std::vector<std::size_t>& nodes) {
  std::vector<std::size_t> out;
  out.reserve(nodes.size() * 3);
  for (auto n : nodes)
    for (std::size_t a = 0; a < 3; ++a) out.push_back(n * 3 + a);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<std::size_t> NodePartition::hand_coords() const { return expand_coords(hand_nodes); }
std::vector<std::size_t> NodePartition::body_coords() const { return expand_coords(body_nodes); }

std::vector<std::string> NodePartition::violations() const {
  std::vector<std::string> out;
  if (hand_nodes.empty()) out.push_back("partition hand set is empty");
  if (body_nodes.empty()) out.push_back("partition body set is empty");
  std::set<std::size_t> hands(hand_nodes.begin(), hand_nodes.end());
  std::set<std::size_t> body(body_nodes.begin(), body_nodes.end());
  for (auto n : hands) {
    if (n >= kNodeCount) out.push_back("partition node " + std::to_string(n) + " out of range");
  }
  for (auto n : body) {
    if (n >= kNodeCount) out.push_back("partition node " + std::to_string(n) + " out of range");
  }
  bool overlap = std::any_of(hands.begin(), hands.end(), [&](auto n) { return body.count(n) > 0; });
  if (overlap) out.push_back("partition not disjoint");
  for (std::size_t n = 0; n < kNodeCount; ++n) {
    if (!hands.count(n) && !body.count(n)) {
      out.push_back("partition does not cover node " + std::to_string(n));
      break;
    }
  }
  return out;
}

NodePartition default_partition() {
  NodePartition p;
  for (std::size_t n = 0; n < 19; ++n) p.body_nodes.push_back(n);
  for (std::size_t n = 19; n < kNodeCount; ++n) p.hand_nodes.push_back(n);
  return p;
}

const char* to_string(SignerRole role) { return role == SignerRole::kNative ? "native" : "learner"; }

SignerRole role_from_string(const std::string& text) {
  if (text == "native") return SignerRole::kNative;
  if (text == "learner") return SignerRole::kLearner;
  throw ParseError("unknown signer role '" + text + "'");
}

PoseSequence load_sequence(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  PoseSequence seq;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row = parse_csv_row(line, line_no);
    if (row.size() != kPoseDim)
      throw DimensionError("expected 183 values, found " + std::to_string(row.size()), line_no);
    SkeletonPose pose;
    for (std::size_t i = 0; i < kPoseDim; ++i) {
      double v = row[i];
      if (std::abs(v) > kCoordLimit + kRangeTolerance)
        throw RangeError("value " + format_double(v) + " outside [-6, 6] at line " + std::to_string(line_no) +
                         ", column " + std::to_string(i + 1));
      pose.coords[i] = std::clamp(v, -kCoordLimit, kCoordLimit);
    }
    seq.frames.push_back(pose);
  }
  if (seq.frames.size() < 2)
    throw InvalidArgument(path.string() + ": a pose sequence needs at least 2 frames, found " +
                          std::to_string(seq.frames.size()));
  return seq;
}

std::string serialize_sequence(const PoseSequence& seq) {
  if (seq.frames.empty()) throw InvalidArgument("cannot save a pose sequence without frames");
  std::string out;
  out.reserve(seq.frames.size() * kPoseDim * 12);
  for (const auto& pose : seq.frames) {
    check_pose(pose);
    for (std::size_t i = 0; i < kPoseDim; ++i) {
      if (i) out.push_back(',');
      out += format_double(pose.coords[i]);
    }
    out.push_back('\n');
  }
  return out;
}

void save_sequence(const PoseSequence& seq, const std::filesystem::path& path) {
  write_text_file(path, serialize_sequence(seq));
}

std::filesystem::path CorpusManifest::resolve(const ManifestEntry& entry) const {
  if (entry.path.is_absolute()) return entry.path;
  return base_dir / entry.path;
}

const SignerEntry* CorpusManifest::find_signer(const std::string& id) const {
  for (const auto& s : signers)
    if (s.id == id) return &s;
  return nullptr;
}

std::vector<ManifestEntry> CorpusManifest::entries_with_role(SignerRole role) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    const SignerEntry* s = find_signer(e.signer);
    if (s && s->role == role) out.push_back(e);
  }
  return out;
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON: " + e.what());
  }
  CorpusManifest m;
  m.base_dir = path.parent_path();
  try {
    for (const auto& s : doc.at("sentences")) m.sentences.push_back(s.get<std::string>());
    for (const auto& s : doc.at("signers"))
      m.signers.push_back({s.at("id").get<std::string>(), role_from_string(s.at("role").get<std::string>())});
    const auto& part = doc.at("partition");
    m.partition.hand_nodes = part.at("hands").get<std::vector<std::size_t>>();
    m.partition.body_nodes = part.at("body").get<std::vector<std::size_t>>();
    for (const auto& e : doc.at("entries"))
      m.entries.push_back(
          {e.at("sentence").get<std::string>(), e.at("signer").get<std::string>(), e.at("path").get<std::string>()});
    if (doc.contains("frame_rate")) m.frame_rate = doc.at("frame_rate").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": invalid manifest: " + e.what());
  }
  return m;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  json doc;
  doc["sentences"] = manifest.sentences;
  doc["signers"] = json::array();
  for (const auto& s : manifest.signers) doc["signers"].push_back({{"id", s.id}, {"role", to_string(s.role)}});
  doc["partition"] = {{"hands", manifest.partition.hand_nodes}, {"body", manifest.partition.body_nodes}};
  doc["entries"] = json::array();
  for (const auto& e : manifest.entries)
    doc["entries"].push_back({{"sentence", e.sentence}, {"signer", e.signer}, {"path", e.path.generic_string()}});
  doc["frame_rate"] = manifest.frame_rate;
  write_text_file(path, doc.dump(2) + "\n");
}

PoseSequence load_entry(const CorpusManifest& manifest, const ManifestEntry& entry) {
  PoseSequence seq = load_sequence(manifest.resolve(entry));
  seq.sentence_id = entry.sentence;
  seq.signer_id = entry.signer;
  const SignerEntry* s = manifest.find_signer(entry.signer);
  if (!s) throw InvalidArgument("unknown signer '" + entry.signer + "'");
  seq.role = s->role;
  seq.frame_rate = manifest.frame_rate;
  return seq;
}

std::vector<std::string> validate_corpus(const CorpusManifest& manifest) {
  std::vector<std::string> out = manifest.partition.violations();
  std::set<std::string> sentences(manifest.sentences.begin(), manifest.sentences.end());
  std::set<std::string> signer_ids;
  for (const auto& s : manifest.signers) {
    if (!signer_ids.insert(s.id).second) out.push_back("duplicate signer id '" + s.id + "'");
  }
  if (sentences.size() != manifest.sentences.size()) out.push_back("duplicate sentence id");
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : manifest.entries) {
    std::string key = "(" + e.sentence + ", " + e.signer + ")";
    if (!sentences.count(e.sentence)) out.push_back("entry " + key + ": unknown sentence");
    if (!signer_ids.count(e.signer)) out.push_back("entry " + key + ": unknown signer");
    if (!seen.insert({e.sentence, e.signer}).second) out.push_back("entry " + key + ": appears more than once");
    std::filesystem::path p = manifest.resolve(e);
    if (!std::filesystem::exists(p)) {
      out.push_back("entry " + key + ": missing file " + p.string());
      continue;
    }
    try {
      load_sequence(p);
    } catch (const std::exception& ex) {
      out.push_back("entry " + key + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace menv
