#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chatguard {

enum class Errc {
  malformed_line,
  file_unreadable,
  sink_failure,
  empty_corpus,
  bad_header,
  dimension_mismatch,
  non_finite_value,
  zero_vector,
  length_mismatch,
  unknown_emote,
  empty_global_set,
  prompt_build_error,
  unparseable_verdict,
  client_error,
  empty_matrix,
  provider_error,
  missing_class,
  version_mismatch,
  corrupt_file,
  too_few_per_class,
  empty_input,
  pipeline_failure,
  even_annotator_count,
  invalid_argument,
  config_error,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::malformed_line: return "MalformedLine";
    case Errc::file_unreadable: return "FileUnreadable";
    case Errc::sink_failure: return "SinkFailure";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::bad_header: return "BadHeader";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::non_finite_value: return "NonFiniteValue";
    case Errc::zero_vector: return "ZeroVector";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::unknown_emote: return "UnknownEmote";
    case Errc::empty_global_set: return "EmptyGlobalSet";
    case Errc::prompt_build_error: return "PromptBuildError";
    case Errc::unparseable_verdict: return "UnparseableVerdict";
    case Errc::client_error: return "ClientError";
    case Errc::empty_matrix: return "EmptyMatrix";
    case Errc::provider_error: return "ProviderError";
    case Errc::missing_class: return "MissingClass";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::corrupt_file: return "CorruptFile";
    case Errc::too_few_per_class: return "TooFewPerClass";
    case Errc::empty_input: return "EmptyInput";
    case Errc::pipeline_failure: return "PipelineFailure";
    case Errc::even_annotator_count: return "EvenAnnotatorCount";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::config_error: return "ConfigError";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is reported as an Error carrying
/// a stable code; the CLI prints `errc_name(code())` as the machine-readable
/// error kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view kind() const noexcept { return errc_name(code_); }

 private:
  Errc code_;
};

}  // namespace chatguard
