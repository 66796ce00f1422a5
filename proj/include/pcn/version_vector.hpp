#pragma once

#include "pcn/bytes.hpp"

#include <map>
#include <string>

namespace pcn {

/// Device identifier ("Alice.laptop"); doubles as the face id in the overlay.
using DeviceId = std::string;

enum class VvOrder { Equal, Dominates, DominatedBy, Concurrent };

/// Per-device update counters. An absent device counts as zero; counters only
/// increase. Componentwise comparison yields the standard partial order.
class VersionVector {
public:
    std::uint64_t get(const DeviceId& d) const
    {
        auto it = counters_.find(d);
        return it == counters_.end() ? 0 : it->second;
    }
    void bump(const DeviceId& d) { ++counters_[d]; }
    void set(const DeviceId& d, std::uint64_t v)
    {
        if (v)
            counters_[d] = v;
    }
    bool empty() const { return counters_.empty(); }
    const std::map<DeviceId, std::uint64_t>& counters() const { return counters_; }

    static VvOrder compare(const VersionVector& a, const VersionVector& b);
    /// Componentwise max.
    static VersionVector join(const VersionVector& a, const VersionVector& b);

    bool dominates(const VersionVector& other) const
    {
        auto o = compare(*this, other);
        return o == VvOrder::Dominates || o == VvOrder::Equal;
    }

    std::string str() const;

    friend bool operator==(const VersionVector& a, const VersionVector& b)
    {
        return a.counters_ == b.counters_;
    }

private:
    std::map<DeviceId, std::uint64_t> counters_;
};

void encodeVv(ByteWriter& w, const VersionVector& vv);
VersionVector decodeVv(ByteReader& r);

} // namespace pcn
