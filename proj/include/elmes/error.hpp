#pragma once

#include <stdexcept>
#include <string>

namespace elmes {

/// Broad failure family. Drives the CLI exit-code taxonomy.
enum class ErrorCategory {
  kConfig,      // malformed or inconsistent experiment file, bad directions
  kRuntime,     // gateway, transport, store
  kEvaluation,  // judge extraction / validation
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  enum class Kind {
    kSyntax,          // not parseable as the config format at all
    kUnknownKey,      // unexpected key in a strict mapping
    kMissingSection,  // required top-level section absent
    kCrossReference,  // id that does not resolve (agent -> model, ...)
    kInvalidValue,    // wrong type, empty list, bad enum, unequal union lists
    kTemplate,        // placeholder that can never be bound
    kDirection,       // direction string or graph structure rejected
  };

  ConfigError(Kind kind, const std::string& what)
      : Error(ErrorCategory::kConfig, what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(ConfigError::Kind kind) noexcept;

/// Structural problems in direction strings or the assembled graph.
class GraphError : public Error {
 public:
  enum class Kind {
    kSyntax,
    kUnknownRouter,
    kBadArguments,
    kDuplicateOutgoing,
    kUndefinedNode,
    kMissingStart,
    kEndUnreachable,
    kDeadEnd,
    kInvalidEdge,
    kNoSuccessor,
  };

  GraphError(Kind kind, const std::string& what)
      : Error(kind == Kind::kNoSuccessor ? ErrorCategory::kInternal
                                         : ErrorCategory::kConfig,
              what),
        kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Unbound placeholder during prompt rendering.
class TemplateError : public Error {
 public:
  TemplateError(std::string placeholder, std::size_t offset,
                const std::string& what)
      : Error(ErrorCategory::kRuntime, what),
        placeholder_(std::move(placeholder)),
        offset_(offset) {}

  const std::string& placeholder() const noexcept { return placeholder_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string placeholder_;
  std::size_t offset_;
};

class StoreError : public Error {
 public:
  enum class Kind { kOpen, kVersion, kIntegrity, kQuery, kEmptyRun };

  StoreError(Kind kind, const std::string& what)
      : Error(ErrorCategory::kRuntime, what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace elmes
