#pragma once
// Deterministic judge world for offline end-to-end runs.
//
// Every sample carries a hidden latent quality per criterion (its truth). The
// simulated task model scores a criterion close to the latent only when the
// rendered instruction for that criterion mentions the criterion's anchor
// phrase; otherwise it answers with an upward bias and heavy noise. The loss,
// gradient and optimizer stages follow simple text rules that surface the
// anchor phrases, so the optimization loop has a discoverable improvement.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mograd/backend.hpp"
#include "mograd/core.hpp"

namespace mograd {

struct SyntheticWorld {
  std::vector<Criterion> criteria;
  std::map<std::string, std::string> anchors;  // criterion id -> anchor phrase
  std::vector<Sample> samples;                 // truth = latent quality

  /// `n` samples with latent qualities drawn from a seeded generator.
  static SyntheticWorld generate(std::size_t n, std::uint64_t seed);
  /// Wraps existing samples; their truth becomes the latent quality.
  static SyntheticWorld from_samples(std::vector<Sample> samples, std::vector<Criterion> criteria);
  static std::map<std::string, std::string> default_anchors();

  static SyntheticWorld load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// The simulated task model's score for one criterion of one sample.
  int judge_score(const Sample& sample, const Criterion& criterion, bool anchored) const;
};

/// Noise in [-1, 1) fixed by (sample id, criterion id).
double synthetic_noise(std::string_view sample_id, std::string_view criterion_id);

class SyntheticBackend : public ChatBackend {
 public:
  explicit SyntheticBackend(SyntheticWorld world);

  /// Throws ProtocolError when the request text does not have the structure
  /// the stage templates produce (or names a sample outside the world).
  ChatResponse chat(const ChatRequest& request) override;
  std::string id() const override { return "synthetic"; }

  const SyntheticWorld& world() const { return world_; }

 private:
  std::string task_response(const std::string& text) const;
  std::string loss_response(const std::string& text) const;
  std::string gradient_response(const ChatRequest& request, const std::string& text) const;
  std::string optimizer_response(const ChatRequest& request, const std::string& text) const;
  std::string diagnostic_response(const std::string& text) const;

  SyntheticWorld world_;
  std::map<std::string, std::size_t, std::less<>> by_summary_;
};

}  // namespace mograd
