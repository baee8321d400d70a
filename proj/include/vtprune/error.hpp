#pragma once

#include <stdexcept>
#include <string>

namespace vtprune {

enum class ErrorKind {
    // core / numeric
    zero_norm_row,
    dim_mismatch,
    shape_mismatch,
    unaligned_layers,
    missing_grid,
    non_finite_score,
    // router / config
    parse_error,
    duplicate_priority,
    // saliency / pruning
    unknown_token,
    budget_exceeds_pool,
    empty_pivot_set,
    degenerate_argmax,
    // calibration
    no_samples,
    scorer_failure,
    timeout,
    malformed_score,
    process_exit,
    // io
    manifest_parse,
    tensor_size_mismatch,
    shape_inconsistency,
    io_error,
};

const char* error_kind_name(ErrorKind k);

// Single exception type carrying a machine-checkable kind plus an optional
// integer payload (row index, token id, line number, exit code...).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message, long long index = -1)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
          kind_(kind),
          index_(index) {}

    ErrorKind kind() const { return kind_; }
    long long index() const { return index_; }

private:
    ErrorKind kind_;
    long long index_;
};

}  // namespace vtprune
