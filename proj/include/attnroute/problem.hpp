#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace attnroute {

inline constexpr int kTracksPerRow = 7;

enum class TermKind { G, SD, GSD };

std::string_view to_string(TermKind kind);
TermKind parse_kind(std::string_view text);

struct InstTerm {
  int id = 0;
  int net = 0;
  TermKind kind = TermKind::SD;
  int x1 = 0;
  int x2 = 0;
  int row = 0;
  std::optional<int> track;  // 1-based, within the row

  int length() const { return x2 - x1; }
  bool operator==(const InstTerm&) const = default;
};

struct Net {
  int net_id = 0;
  std::vector<int> members;  // instTerm ids, ascending
  bool operator==(const Net&) const = default;
};

struct WspConfig {
  int rows = 1;
  int tracks_per_row = kTracksPerRow;
  int width = 0;
  std::vector<int> g_tracks{1, 2, 6, 7};
  std::vector<int> sd_tracks{2, 3, 4, 5, 6};
  std::vector<int> gsd_tracks{2, 6};

  const std::vector<int>& tracks_for(TermKind kind) const;
  bool operator==(const WspConfig&) const = default;
};

struct Problem {
  std::string name;
  WspConfig wsp;
  std::vector<InstTerm> instterms;
  std::vector<Net> nets;

  const InstTerm* find(int id) const;
  bool operator==(const Problem&) const = default;
};

struct Violation {
  std::string rule;  // e.g. "duplicate-id", "dangling-member"
  int entity = 0;    // instTerm or net id the rule fired on
  std::string detail;
};

// Raised for malformed problem files. `what()` names the position or entity.
class ProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenConfig {
  int n_min = 10;
  int n_max = 100;
  int nets_min = 3;
  int nets_max = 30;
  int rows = 3;
  int width = 40;
  int max_term_length = 6;
  // Cap on how many instTerms may stack over one x position of a row.
  int max_depth = 4;
  std::array<double, 3> kind_mix{0.4, 0.4, 0.2};  // G, SD, GSD
  std::uint64_t seed = 0;
  std::string name = "gen";
};

Problem parse_problem(std::string_view text);
std::string serialize_problem(const Problem& p);

// Groups instTerms by net id into ascending nets with ascending members.
std::vector<Net> derive_nets(const std::vector<InstTerm>& instterms);

// Sorts instterms by id and rebuilds nets. parse/serialize round-trip on this form.
Problem canonicalize(Problem p);

std::vector<Violation> validate_problem(const Problem& p);

// Throws ProblemError on empty or inverted ranges and a bad kind_mix.
void validate_gen_config(const GenConfig& cfg);
Problem generate_problem(const GenConfig& cfg);

GenConfig parse_gen_config(std::string_view json_text);
std::string serialize_gen_config(const GenConfig& cfg);

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> val;
  std::vector<T> test;
};

// Floor-rounded sizes for val and test; the remainder goes to train.
std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> ratios);
std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, std::array<double, 3> ratios,
                                                      std::uint64_t seed);

template <typename T>
Split<T> split_dataset(const std::vector<T>& items, std::array<double, 3> ratios, std::uint64_t seed) {
  auto idx = split_indices(items.size(), ratios, seed);
  Split<T> out;
  for (auto i : idx[0]) out.train.push_back(items[i]);
  for (auto i : idx[1]) out.val.push_back(items[i]);
  for (auto i : idx[2]) out.test.push_back(items[i]);
  return out;
}

}  // namespace attnroute
