#pragma once

#include "licds/common.hpp"
#include "licds/core.hpp"
#include "licds/integrate.hpp"
#include "licds/local_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace licds {

/// Uniform quantization layout shared by encoder and decoder.
struct QuantizationSpec {
    int state_bits = 16;                  // log2|X| per state component
    int coeff_bits = 16;                  // log2|A| per coefficient
    std::vector<Interval> state_bounds;   // per component
    double coeff_bound = 64.0;            // coefficients clamped to [-B, B]

    void validate(int dim) const {
        if (state_bits < 4 || state_bits > 32 || coeff_bits < 4 || coeff_bits > 32)
            throw ConfigError("quantizer bits must lie in [4, 32]");
        if (static_cast<int>(state_bounds.size()) != dim)
            throw ConfigError("state_bounds dimension mismatch");
        for (const auto& [lo, hi] : state_bounds)
            if (!(hi > lo)) throw ConfigError("state bounds must be non-degenerate");
        if (!(coeff_bound > 0.0)) throw ConfigError("coeff_bound must be positive");
    }
};

/// Mid-rise uniform quantizer with 2^bits levels over [lo, hi]. Values are
/// clamped into the interval first; round-trip error is at most step/2.
inline std::uint32_t quantize(double v, int bits, double lo, double hi) {
    const double clamped = std::clamp(v, lo, hi);
    const double levels = std::ldexp(1.0, bits);  // 2^bits
    const double step = (hi - lo) / levels;
    auto code = static_cast<long long>(std::floor((clamped - lo) / step));
    code = std::clamp<long long>(code, 0, static_cast<long long>(levels) - 1);
    return static_cast<std::uint32_t>(code);
}

inline double dequantize(std::uint32_t code, int bits, double lo, double hi) {
    const double levels = std::ldexp(1.0, bits);
    const double step = (hi - lo) / levels;
    return lo + (static_cast<double>(code) + 0.5) * step;
}

namespace detail {

class BitWriter {
public:
    void put(std::uint32_t value, int bits) {
        for (int i = 0; i < bits; ++i) {
            if (bit_ == 0) bytes_.push_back(0);
            if ((value >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(1u << bit_);
            bit_ = (bit_ + 1) % 8;
        }
    }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
    int bit_ = 0;
};

class BitReader {
public:
    BitReader(const std::uint8_t* data, std::size_t size_bytes)
        : data_(data), size_bits_(size_bytes * 8) {}
    std::uint32_t get(int bits) {
        std::uint32_t v = 0;
        for (int i = 0; i < bits; ++i) {
            if (pos_ >= size_bits_)
                throw IoError("truncated payload: wanted bit " + std::to_string(pos_ + 1) +
                              " of " + std::to_string(size_bits_));
            const std::size_t byte = pos_ / 8, bit = pos_ % 8;
            if ((data_[byte] >> bit) & 1u) v |= (1u << i);
            ++pos_;
        }
        return v;
    }

private:
    const std::uint8_t* data_;
    std::size_t size_bits_;
    std::size_t pos_ = 0;
};

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline double get_f64(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace detail

/// Per-message bit accounting. `selected_bits` charges the transmitted
/// coefficients (selected complexity per partition); `kmax_bits` is the
/// flat-k_max variant of the same formula for comparison. `file_bits`
/// additionally charges the self-describing header.
struct BitAccounting {
    std::uint64_t payload_bits = 0;   // = selected_bits
    std::uint64_t header_bits = 0;
    std::uint64_t selected_bits = 0;  // sum_j n*state_bits + n*terms(k_j)*coeff_bits
    std::uint64_t kmax_bits = 0;      // sum_j n*state_bits + n*terms(k_max)*coeff_bits
    std::uint64_t file_bits = 0;      // header + payload
    std::vector<std::uint64_t> per_partition_bits;
};

/// The quantized wire message: header (dimension, partition layout, grid,
/// quantizer) plus a little-endian bit-packed payload of restart-state and
/// coefficient codes per partition. Basis exponents are never transmitted;
/// both sides regenerate the graded-lex order from (dim, k_j).
struct EncodedMessage {
    static constexpr std::uint8_t kVersion = 1;

    int dim = 0;
    int m = 0;
    double dt = 0.0;
    double t_local = 0.0;
    QuantizationSpec spec;
    std::vector<int> k_per_partition;  // complexity (degree levels) per partition
    std::vector<std::uint8_t> payload;
    int clamped_values = 0;  // encode-side statistic, not serialized

    std::uint64_t payload_bits() const {
        std::uint64_t bits = 0;
        for (int k : k_per_partition)
            bits += static_cast<std::uint64_t>(dim) * spec.state_bits +
                    static_cast<std::uint64_t>(dim) * taylor_terms(dim, k) * spec.coeff_bits;
        return bits;
    }

    std::uint64_t header_bytes() const {
        return 4 + 1 + 1 + 2 + 8 + 8 + 1 + 1 + 8 + 16ull * dim + k_per_partition.size();
    }

    BitAccounting accounting(int k_max) const {
        BitAccounting acc;
        acc.header_bits = header_bytes() * 8;
        for (int k : k_per_partition) {
            const std::uint64_t part =
                static_cast<std::uint64_t>(dim) * spec.state_bits +
                static_cast<std::uint64_t>(dim) * taylor_terms(dim, k) * spec.coeff_bits;
            acc.per_partition_bits.push_back(part);
            acc.selected_bits += part;
            acc.kmax_bits += static_cast<std::uint64_t>(dim) * spec.state_bits +
                             static_cast<std::uint64_t>(dim) * taylor_terms(dim, k_max) *
                                 spec.coeff_bits;
        }
        acc.payload_bits = acc.selected_bits;
        acc.file_bits = acc.header_bits + acc.payload_bits;
        return acc;
    }

    std::vector<std::uint8_t> to_bytes() const {
        std::vector<std::uint8_t> out{'L', 'I', 'C', 'D', kVersion};
        out.push_back(static_cast<std::uint8_t>(dim));
        out.push_back(static_cast<std::uint8_t>(m & 0xff));
        out.push_back(static_cast<std::uint8_t>((m >> 8) & 0xff));
        detail::put_f64(out, dt);
        detail::put_f64(out, t_local);
        out.push_back(static_cast<std::uint8_t>(spec.state_bits));
        out.push_back(static_cast<std::uint8_t>(spec.coeff_bits));
        detail::put_f64(out, spec.coeff_bound);
        for (const auto& [lo, hi] : spec.state_bounds) {
            detail::put_f64(out, lo);
            detail::put_f64(out, hi);
        }
        for (int k : k_per_partition) out.push_back(static_cast<std::uint8_t>(k));
        out.insert(out.end(), payload.begin(), payload.end());
        return out;
    }

    static EncodedMessage from_bytes(const std::vector<std::uint8_t>& bytes) {
        auto need = [&](std::size_t n, const char* what) {
            if (bytes.size() < n)
                throw IoError(std::string("message too short while reading ") + what);
        };
        need(5, "magic");
        if (bytes[0] != 'L' || bytes[1] != 'I' || bytes[2] != 'C' || bytes[3] != 'D')
            throw IoError("bad magic, not a .licd message");
        if (bytes[4] != kVersion)
            throw IoError("unsupported message version " + std::to_string(bytes[4]));
        EncodedMessage msg;
        std::size_t off = 5;
        need(off + 4, "layout");
        msg.dim = bytes[off++];
        msg.m = bytes[off] | (bytes[off + 1] << 8);
        off += 2;
        need(off + 16, "grid");
        msg.dt = detail::get_f64(&bytes[off]);
        off += 8;
        msg.t_local = detail::get_f64(&bytes[off]);
        off += 8;
        need(off + 10, "quantizer");
        msg.spec.state_bits = bytes[off++];
        msg.spec.coeff_bits = bytes[off++];
        msg.spec.coeff_bound = detail::get_f64(&bytes[off]);
        off += 8;
        need(off + 16ull * msg.dim, "state bounds");
        for (int d = 0; d < msg.dim; ++d) {
            const double lo = detail::get_f64(&bytes[off]);
            const double hi = detail::get_f64(&bytes[off + 8]);
            msg.spec.state_bounds.emplace_back(lo, hi);
            off += 16;
        }
        if (msg.dim < 1 || msg.m < 1) throw IoError("message declares an empty layout");
        need(off + static_cast<std::size_t>(msg.m), "partition complexities");
        for (int j = 0; j < msg.m; ++j) {
            const int k = bytes[off++];
            if (k < 1) throw IoError("partition complexity must be >= 1");
            msg.k_per_partition.push_back(k);
        }
        msg.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.end());
        const std::uint64_t want = msg.payload_bits();
        if (msg.payload.size() * 8 < want)
            throw IoError("truncated payload: expected " + std::to_string(want) +
                          " bits, got " + std::to_string(msg.payload.size() * 8));
        return msg;
    }
};

/// Serialize an LicdsResult into the bit message. Restart states are coded
/// against the state bounds, coefficients against [-B, B] (clamped, with a
/// count of clamps reported on the message).
inline EncodedMessage encode(const LicdsResult& result, const QuantizationSpec& spec) {
    if (result.partitions.empty()) throw ConfigError("cannot encode an empty result");
    const int dim = static_cast<int>(result.partitions.front().restart_state.size());
    spec.validate(dim);

    EncodedMessage msg;
    msg.dim = dim;
    msg.m = result.m_star;
    msg.dt = result.params.dt;
    msg.t_local = result.params.T_global / result.m_star;
    msg.spec = spec;

    detail::BitWriter writer;
    for (const auto& part : result.partitions) {
        msg.k_per_partition.push_back(part.k_star);
        const int n_coeff = taylor_terms(dim, part.k_star);
        if (part.model.coeffs.cols() != n_coeff)
            throw ConfigError("partition " + std::to_string(part.index) +
                              " coefficient count does not match its complexity");
        for (int d = 0; d < dim; ++d) {
            const auto& [lo, hi] = spec.state_bounds[static_cast<std::size_t>(d)];
            const double v = part.restart_state[d];
            if (v < lo || v > hi) ++msg.clamped_values;
            writer.put(quantize(v, spec.state_bits, lo, hi), spec.state_bits);
        }
        for (int d = 0; d < dim; ++d)
            for (int i = 0; i < n_coeff; ++i) {
                const double v = part.model.coeffs(d, i);
                if (std::abs(v) > spec.coeff_bound) ++msg.clamped_values;
                writer.put(quantize(v, spec.coeff_bits, -spec.coeff_bound, spec.coeff_bound),
                           spec.coeff_bits);
            }
    }
    msg.payload = writer.bytes();
    return msg;
}

/// Rebuild the quantized result carried by a message: dequantized restart
/// states and coefficients on the regenerated graded-lex bases. Re-encoding
/// this result with the same spec reproduces the message bit for bit.
inline LicdsResult decode_result(const EncodedMessage& msg) {
    msg.spec.validate(msg.dim);
    LicdsResult result;
    result.m_star = msg.m;
    result.params.T_global = msg.t_local * msg.m;
    result.params.dt = msg.dt;
    result.params.m_max = msg.m;
    result.params.k_max = *std::max_element(msg.k_per_partition.begin(),
                                            msg.k_per_partition.end());
    result.params.lambda = 0.0;  // not transmitted

    detail::BitReader reader(msg.payload.data(), msg.payload.size());
    for (int j = 0; j < msg.m; ++j) {
        PartitionResult part;
        part.index = j + 1;
        part.k_star = msg.k_per_partition[static_cast<std::size_t>(j)];
        Vector x0(msg.dim);
        for (int d = 0; d < msg.dim; ++d) {
            const auto& [lo, hi] = msg.spec.state_bounds[static_cast<std::size_t>(d)];
            x0[d] = dequantize(reader.get(msg.spec.state_bits), msg.spec.state_bits, lo, hi);
        }
        const int n_coeff = taylor_terms(msg.dim, part.k_star);
        Matrix coeffs(msg.dim, n_coeff);
        for (int d = 0; d < msg.dim; ++d)
            for (int i = 0; i < n_coeff; ++i)
                coeffs(d, i) = dequantize(reader.get(msg.spec.coeff_bits), msg.spec.coeff_bits,
                                          -msg.spec.coeff_bound, msg.spec.coeff_bound);
        part.restart_state = x0;
        part.model.working_point = x0;
        part.model.basis = MonomialBasis::graded_lex(msg.dim, n_coeff);
        part.model.coeffs = std::move(coeffs);
        result.partitions.push_back(std::move(part));
    }
    result.k_total_star = 0;
    for (const auto& p : result.partitions) result.k_total_star += p.k_star;
    return result;
}

/// Reconstruct the trajectory a message describes: per partition, roll the
/// dequantized local model forward with RK4 over its window and concatenate
/// on the shared grid (boundary samples belong to the later partition).
/// Pass dt_override > 0 to roll out on a different step than the header's.
inline Trajectory decode(const EncodedMessage& msg, double dt_override = 0.0) {
    LicdsResult skeleton = decode_result(msg);
    const double dt = dt_override > 0.0 ? dt_override : msg.dt;
    const double T_global = msg.t_local * msg.m;
    const auto n = static_cast<std::size_t>(std::llround(T_global / dt));
    const auto windows = detail::partition_indices(n, msg.m);

    Trajectory out;
    out.dt = dt;
    out.t0 = 0.0;
    out.states.assign(n + 1, Vector());
    for (int j = msg.m - 1; j >= 0; --j) {
        const auto& [first, last] = windows[static_cast<std::size_t>(j)];
        const auto& part = skeleton.partitions[static_cast<std::size_t>(j)];
        if (last == first) {
            if (out.states[first].size() == 0) out.states[first] = part.restart_state;
            continue;
        }
        const double T_window = static_cast<double>(last - first) * dt;
        const Trajectory roll =
            integrate(part.model.as_dynamics(), part.restart_state,
                      static_cast<double>(first) * dt, T_window, dt);
        for (std::size_t i = first; i <= last; ++i)
            if (out.states[i].size() == 0) out.states[i] = roll.states[i - first];
    }
    return out;
}

} // namespace licds
