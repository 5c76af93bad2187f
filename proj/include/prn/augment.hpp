#pragma once

#include <cstddef>
#include <string>

#include "prn/errors.hpp"
#include "prn/ingest.hpp"

namespace prn::augment {

/*
 * Temporal channel-shift: the first block of channels moves one or more
 * steps forward along the snippet axis, the second block moves backward,
 * the rest stay put. Vacated rows are zero-filled.
 */
struct ShiftSpec {
    double forward_fraction = 0.25;
    double backward_fraction = 0.25;
    std::size_t step = 1;

    bool valid() const {
        return forward_fraction >= 0.0 && backward_fraction >= 0.0 &&
               forward_fraction + backward_fraction <= 1.0 && step >= 1;
    }
};

enum class AugmentMode { Replace, AppendAsExtraSample };

inline AugmentMode augment_mode_from_string(const std::string& s) {
    if (s == "replace")
        return AugmentMode::Replace;
    if (s == "append" || s == "append-as-extra-sample")
        return AugmentMode::AppendAsExtraSample;
    throw ConfigError("unknown augment mode '" + s + "'");
}

inline ingest::FeatureSequence temporal_shift(const ingest::FeatureSequence& seq,
                                              const ShiftSpec& spec) {
    if (!spec.valid())
        throw ValueError("invalid shift spec");
    const std::size_t t = seq.t();
    const std::size_t c = seq.c();
    if (spec.step >= t)
        throw StepTooLarge("shift step " + std::to_string(spec.step) +
                           " must be smaller than sequence length " + std::to_string(t));

    const std::size_t fwd_end =
        static_cast<std::size_t>(static_cast<double>(c) * spec.forward_fraction);
    const std::size_t bwd_end = static_cast<std::size_t>(
        static_cast<double>(c) * (spec.forward_fraction + spec.backward_fraction));

    ingest::FeatureSequence out;
    out.video_id = seq.video_id;
    out.data = Matrix(t, c);
    const std::size_t step = spec.step;
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (ch < fwd_end) {
            // forward: row r takes the value of row r-step
            for (std::size_t r = 0; r < t; ++r)
                out.data(r, ch) = r >= step ? seq.data(r - step, ch) : 0.0;
        } else if (ch < bwd_end) {
            // backward: row r takes the value of row r+step
            for (std::size_t r = 0; r < t; ++r)
                out.data(r, ch) = r + step < t ? seq.data(r + step, ch) : 0.0;
        } else {
            for (std::size_t r = 0; r < t; ++r)
                out.data(r, ch) = seq.data(r, ch);
        }
    }
    return out;
}

} // namespace prn::augment
