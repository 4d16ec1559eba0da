#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbdae/common.hpp"

namespace cbdae {

// Multivariate time series, row-major [time][channel]. Channels flagged as
// inputs are noise-free manipulated variables; the rest are measurements.
struct Series {
    std::vector<std::string> channels;
    std::vector<std::uint8_t> is_input;
    std::vector<double> data;

    std::size_t n_channels() const { return channels.size(); }
    std::size_t length() const {
        return channels.empty() ? 0 : data.size() / channels.size();
    }

    double at(std::size_t t, std::size_t c) const {
        return data[t * channels.size() + c];
    }
    std::span<const double> row(std::size_t t) const {
        return {data.data() + t * channels.size(), channels.size()};
    }

    std::vector<double> channel(std::size_t c) const {
        std::vector<double> out(length());
        for (std::size_t t = 0; t < out.size(); ++t) out[t] = at(t, c);
        return out;
    }

    // Half-open slice [t0, t1).
    Series slice(std::size_t t0, std::size_t t1) const {
        if (t0 > t1 || t1 > length()) throw RangeError("series slice out of range");
        Series s;
        s.channels = channels;
        s.is_input = is_input;
        s.data.assign(data.begin() + static_cast<std::ptrdiff_t>(t0 * n_channels()),
                      data.begin() + static_cast<std::ptrdiff_t>(t1 * n_channels()));
        return s;
    }
};

}  // namespace cbdae
