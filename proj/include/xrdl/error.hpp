#pragma once

#include <stdexcept>
#include <string>

namespace xrdl {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class error_category {
    usage,       // caller misuse: bad arguments, bad config, API contract violations
    data,        // ingestion, decoding, file formats, persistence
    divergence,  // training produced non-finite values
};

class error : public std::runtime_error {
  public:
    error(error_category category, const std::string& kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), category_(category), kind_(kind) {}

    [[nodiscard]] error_category category() const noexcept { return category_; }
    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

  private:
    error_category category_;
    std::string kind_;
};

#define XRDL_DEFINE_ERROR(name, category)                                           \
    class name : public error {                                                     \
      public:                                                                       \
        explicit name(const std::string& message) : error(category, #name, message) {} \
    }

XRDL_DEFINE_ERROR(shape_error, error_category::usage);
XRDL_DEFINE_ERROR(numeric_domain_error, error_category::divergence);
XRDL_DEFINE_ERROR(parameter_error, error_category::usage);
XRDL_DEFINE_ERROR(label_error, error_category::usage);
XRDL_DEFINE_ERROR(usage_error, error_category::usage);
XRDL_DEFINE_ERROR(ingestion_error, error_category::data);
XRDL_DEFINE_ERROR(decode_error, error_category::data);
XRDL_DEFINE_ERROR(format_error, error_category::data);
XRDL_DEFINE_ERROR(corruption_error, error_category::data);
XRDL_DEFINE_ERROR(version_error, error_category::data);
XRDL_DEFINE_ERROR(consistency_error, error_category::data);
XRDL_DEFINE_ERROR(io_error, error_category::data);
XRDL_DEFINE_ERROR(divergence_error, error_category::divergence);

#undef XRDL_DEFINE_ERROR

}  // namespace xrdl
