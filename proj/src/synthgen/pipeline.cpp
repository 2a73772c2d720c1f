#include "fgted/synthgen/pipeline.hpp"

#include <fstream>

#include "fgted/numerics/errors.hpp"
#include "fgted/numerics/rng.hpp"

namespace fgted::synthgen {

using dataio::Side;
using json = nlohmann::ordered_json;

BilingualExample build_example(std::string id, const ParallelPair& pair, Side side,
                               const MaskedSentence& masked,
                               const std::vector<std::string>& filled) {
  if (masked.inserted_spans.size() != 1) throw DataError("expected exactly one inserted span");
  const MaskSpan span = masked.inserted_spans.front();
  const auto& original = side == Side::kHyp ? pair.tgt : pair.src;
  if (filled.size() != masked.tokens.size() || span.length == 0 ||
      span.start + span.length > filled.size()) {
    throw DataError("filled sentence does not match the masked layout");
  }
  if (masked.without_spans() != original) throw DataError("masked sentence does not extend the pair");
  for (std::size_t i = 0; i < filled.size(); ++i) {
    const bool inside = i >= span.start && i < span.start + span.length;
    if (is_mask(filled[i])) throw DataError("filled sentence still contains a mask");
    if (!inside && filled[i] != masked.tokens[i]) {
      throw DataError("fill changed a word outside the inserted span");
    }
  }

  BilingualExample ex;
  ex.id = std::move(id);
  ex.src = pair.src;
  ex.hyp = pair.tgt;
  (side == Side::kHyp ? ex.hyp : ex.src) = filled;
  ex.labels_src.assign(ex.src.size(), 0);
  ex.labels_hyp.assign(ex.hyp.size(), 0);
  auto& labels = side == Side::kHyp ? ex.labels_hyp : ex.labels_src;
  for (std::size_t i = span.start; i < span.start + span.length; ++i) labels[i] = 1;
  ex.provenance = {side, span.start, span.length};
  return ex;
}

std::vector<std::string> check_example(const BilingualExample& ex) {
  std::vector<std::string> bad;
  if (ex.src.empty() || ex.hyp.empty()) bad.emplace_back("empty sentence");
  if (ex.labels_src.size() != ex.src.size()) bad.emplace_back("labels_src length");
  if (ex.labels_hyp.size() != ex.hyp.size()) bad.emplace_back("labels_hyp length");
  if (!bad.empty()) return bad;

  const Side side = ex.provenance.side;
  const Side other = side == Side::kHyp ? Side::kSrc : Side::kHyp;
  for (int l : ex.labels(other)) {
    if (l != 0) {
      bad.emplace_back("positive label on the unprocessed side");
      break;
    }
  }
  const auto& labels = ex.labels(side);
  const std::size_t a = ex.provenance.start;
  const std::size_t b = a + ex.provenance.len;
  if (ex.provenance.len == 0 || b > labels.size()) {
    bad.emplace_back("provenance span out of range");
    return bad;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int want = (i >= a && i < b) ? 1 : 0;
    if (labels[i] != want) {
      bad.emplace_back("positive labels do not match the filled span");
      break;
    }
  }
  for (const auto* words : {&ex.src, &ex.hyp}) {
    for (const auto& w : *words) {
      if (w.empty() || is_mask(w)) {
        bad.emplace_back("empty or mask word");
        return bad;
      }
    }
  }
  return bad;
}

dataio::AnnotatedExample to_annotated(const BilingualExample& ex) {
  dataio::AnnotatedExample out;
  out.id = ex.id;
  out.src = ex.src;
  out.hyp = ex.hyp;
  const auto type = ex.provenance.side == Side::kHyp ? dataio::ErrorType::kAddition
                                                     : dataio::ErrorType::kOmission;
  out.spans.push_back({ex.provenance.side, ex.provenance.start,
                       ex.provenance.start + ex.provenance.len, type, 1});
  return out;
}

std::string to_json_line(const BilingualExample& ex) {
  json j;
  j["id"] = ex.id;
  j["src"] = ex.src;
  j["hyp"] = ex.hyp;
  j["labels_src"] = ex.labels_src;
  j["labels_hyp"] = ex.labels_hyp;
  j["provenance"] = {{"side", side_name(ex.provenance.side)},
                     {"start", ex.provenance.start},
                     {"len", ex.provenance.len}};
  return j.dump();
}

BilingualExample bilingual_from_json_line(std::string_view line, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  BilingualExample ex;
  try {
    const json j = json::parse(line);
    ex.id = j.at("id").get<std::string>();
    ex.src = j.at("src").get<std::vector<std::string>>();
    ex.hyp = j.at("hyp").get<std::vector<std::string>>();
    ex.labels_src = j.at("labels_src").get<std::vector<int>>();
    ex.labels_hyp = j.at("labels_hyp").get<std::vector<int>>();
    const json& p = j.at("provenance");
    ex.provenance.side = dataio::side_from_name(p.at("side").get<std::string>());
    ex.provenance.start = p.at("start").get<std::size_t>();
    ex.provenance.len = p.at("len").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + e.what());
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  }
  const auto bad = check_example(ex);
  if (!bad.empty()) throw DataError(where + bad.front());
  return ex;
}

void write_bilingual(const std::filesystem::path& path,
                     const std::vector<BilingualExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  for (const auto& ex : examples) out << to_json_line(ex) << '\n';
}

std::vector<BilingualExample> read_bilingual(const std::filesystem::path& path) {
  std::vector<BilingualExample> out;
  const auto lines = dataio::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      out.push_back(bilingual_from_json_line(lines[i], i + 1));
    } catch (const DataError& e) {
      throw DataError(path.string() + " " + e.what());
    }
  }
  return out;
}

json SynthStats::to_json() const {
  json j;
  j["input_pairs"] = input_pairs;
  j["retained_pairs"] = retained_pairs;
  j["below_threshold"] = below_threshold;
  j["scorer_failures"] = scorer_failures;
  j["filter_drop_rate"] =
      input_pairs == 0 ? 0.0
                       : static_cast<double>(input_pairs - retained_pairs) / static_cast<double>(input_pairs);
  j["requested"] = requested;
  j["generated"] = generated;
  j["side_split"] = {{"hyp", hyp_side}, {"src", src_side}};
  json hist = json::object();
  for (std::size_t len = 1; len < span_lengths.size(); ++len) {
    hist[std::to_string(len)] = span_lengths[len];
  }
  j["span_length_histogram"] = hist;
  j["status"] = partial ? "partial" : "complete";
  return j;
}

namespace {

Side choose_side(SidePolicy policy, Rng& rng) {
  switch (policy) {
    case SidePolicy::kHypOnly:
      return Side::kHyp;
    case SidePolicy::kSrcOnly:
      return Side::kSrc;
    case SidePolicy::kRandomUniform:
      break;
  }
  return uniform_index(rng, 2) == 0 ? Side::kHyp : Side::kSrc;
}

}  // namespace

BilingualExample synthesize_one(const ParallelPair& pair, std::size_t index,
                                const SynthModels& models, const SynthConfig& config) {
  if (!models.hyp_filler || !models.src_filler || !models.hyp_perplexity ||
      !models.src_perplexity) {
    throw UsageError("synthesis needs a filler and a reranker for both sides");
  }
  Rng rng = make_stream(config.seed, {index});
  const Side side = choose_side(config.side_policy, rng);
  const auto& words = side == Side::kHyp ? pair.tgt : pair.src;
  const MaskedSentence masked = insert_masks(words, rng, config);
  const Filler& filler = side == Side::kHyp ? *models.hyp_filler : *models.src_filler;
  const auto& ppl = side == Side::kHyp ? models.hyp_perplexity : models.src_perplexity;
  const auto candidates = recursive_beam_fill(masked, filler, config.beam);
  const Candidate chosen = rerank_and_pick(candidates, ppl, config.top_k, rng);
  return build_example("syn-" + std::to_string(index), pair, side, masked, chosen.words);
}

SynthResult generate_dataset(const std::vector<ParallelPair>& corpus, const PairScorer& scorer,
                             const SynthModels& models, const SynthConfig& config,
                             std::size_t n) {
  config.validate();
  const FilterReport filtered = filter_pairs(corpus, scorer, config.filter_threshold);
  if (filtered.retained.empty()) throw DataError("no parallel pairs survive filtering");

  SynthResult result;
  SynthStats& st = result.stats;
  st.input_pairs = filtered.input;
  st.retained_pairs = filtered.retained.size();
  st.below_threshold = filtered.below_threshold;
  st.scorer_failures = filtered.scorer_failures;
  st.requested = n;
  st.span_lengths.assign(config.max_consecutive_masks + 1, 0);

  const std::size_t count = std::min(n, filtered.retained.size());
  st.partial = count < n;
  result.examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    BilingualExample ex = synthesize_one(filtered.retained[i], i, models, config);
    const auto bad = check_example(ex);
    if (!bad.empty()) throw StateError("generated example " + ex.id + " is invalid: " + bad.front());
    ++(ex.provenance.side == Side::kHyp ? st.hyp_side : st.src_side);
    ++st.span_lengths[ex.provenance.len];
    result.examples.push_back(std::move(ex));
  }
  st.generated = result.examples.size();
  return result;
}

}  // namespace fgted::synthgen
