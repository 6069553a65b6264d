#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "earn/box.hpp"
#include "earn/dataset.hpp"

namespace earn {

using Matrix = Eigen::MatrixXd;

inline constexpr int kAbsLocDim = 5;
inline constexpr int kRelLocSlots = 5;
inline constexpr int kLocationDim = kAbsLocDim + 5 * kRelLocSlots;  // 30

/// Candidate set used to build context pair features.
enum class ContextMode {
    five_nearest,  // "5cxtp": five nearest proposals of other categories, max pooled
    max_all,       // "mcxtp": all other proposals, max pooled
    soft_all,      // "scxtp": all other proposals, score-weighted sum
};

/// Location part appended to each context pair feature.
enum class ContextLocation { relative, absolute, concat };

inline int context_location_dim(ContextLocation loc) {
    switch (loc) {
        case ContextLocation::relative: return 5;
        case ContextLocation::absolute: return 5;
        case ContextLocation::concat: return 10;
    }
    return 5;
}

inline std::array<double, 5> encode_absolute_location(const Box& b, double width, double height) {
    return {b.x_tl() / width, b.y_tl() / height, b.x_br() / width, b.y_br() / height,
            b.area() / (width * height)};
}

/// Offsets of `other` relative to `target`, normalized by the target's size.
/// Differences are taken as other minus target.
inline std::array<double, 5> relative_offset(const Box& target, const Box& other) {
    const double w = target.width();
    const double h = target.height();
    return {(other.x_tl() - target.x_tl()) / w, (other.y_tl() - target.y_tl()) / h,
            (other.x_br() - target.x_br()) / w, (other.y_br() - target.y_br()) / h,
            other.area() / target.area()};
}

/// Indices j != i passing `keep`, sorted by center distance to i, ties by index.
template <class Pred>
std::vector<int> nearest_proposals(int i, std::span<const Proposal> proposals, Pred keep) {
    std::vector<int> idx;
    for (int j = 0; j < static_cast<int>(proposals.size()); ++j) {
        if (j != i && keep(j)) idx.push_back(j);
    }
    const Box& bi = proposals[static_cast<std::size_t>(i)].box;
    std::vector<double> dist(proposals.size(), 0.0);
    for (int j : idx) dist[static_cast<std::size_t>(j)] = center_distance(bi, proposals[static_cast<std::size_t>(j)].box);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double da = dist[static_cast<std::size_t>(a)];
        const double db = dist[static_cast<std::size_t>(b)];
        return da < db || (da == db && a < b);
    });
    return idx;
}

/// 25-vector: offsets to up to five nearest same-category proposals, zero padded.
inline std::array<double, 25> encode_relative_location(int i, std::span<const Proposal> proposals) {
    const int cat = proposals[static_cast<std::size_t>(i)].category_id;
    auto near = nearest_proposals(i, proposals, [&](int j) {
        return proposals[static_cast<std::size_t>(j)].category_id == cat;
    });
    std::array<double, 25> out{};
    const std::size_t slots = std::min<std::size_t>(near.size(), kRelLocSlots);
    for (std::size_t k = 0; k < slots; ++k) {
        const auto d = relative_offset(proposals[static_cast<std::size_t>(i)].box,
                                       proposals[static_cast<std::size_t>(near[k])].box);
        std::copy(d.begin(), d.end(), out.begin() + static_cast<std::ptrdiff_t>(5 * k));
    }
    return out;
}

inline Eigen::RowVectorXd encode_location(int i, std::span<const Proposal> proposals, double width, double height) {
    Eigen::RowVectorXd v(kLocationDim);
    const auto abs = encode_absolute_location(proposals[static_cast<std::size_t>(i)].box, width, height);
    const auto rel = encode_relative_location(i, proposals);
    for (int k = 0; k < kAbsLocDim; ++k) v(k) = abs[static_cast<std::size_t>(k)];
    for (int k = 0; k < 25; ++k) v(kAbsLocDim + k) = rel[static_cast<std::size_t>(k)];
    return v;
}

/// Candidate context proposals for one target. Rows of `features` are
/// [context_feature(j) ; location part]; `indices` are the proposal ids j.
struct ContextPairs {
    Matrix features;
    std::vector<int> indices;

    int size() const { return static_cast<int>(indices.size()); }
};

inline ContextPairs assemble_context_pairs(int i, std::span<const Proposal> proposals, double width, double height,
                                           ContextMode mode, ContextLocation loc = ContextLocation::relative) {
    const int cat = proposals[static_cast<std::size_t>(i)].category_id;
    std::vector<int> idx;
    if (mode == ContextMode::five_nearest) {
        idx = nearest_proposals(i, proposals, [&](int j) {
            return proposals[static_cast<std::size_t>(j)].category_id != cat;
        });
        if (idx.size() > 5) idx.resize(5);
    } else {
        for (int j = 0; j < static_cast<int>(proposals.size()); ++j) {
            if (j != i) idx.push_back(j);
        }
    }
    const int dv = proposals.empty() ? 0 : static_cast<int>(proposals.front().context_feature.size());
    const int dl = context_location_dim(loc);
    ContextPairs out;
    out.indices = idx;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), dv + dl);
    const Box& bi = proposals[static_cast<std::size_t>(i)].box;
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Proposal& pj = proposals[static_cast<std::size_t>(idx[r])];
        const auto row = static_cast<Eigen::Index>(r);
        for (int k = 0; k < dv; ++k) out.features(row, k) = pj.context_feature[static_cast<std::size_t>(k)];
        const auto rel = relative_offset(bi, pj.box);
        const auto abs = encode_absolute_location(pj.box, width, height);
        for (int k = 0; k < 5; ++k) {
            switch (loc) {
                case ContextLocation::relative: out.features(row, dv + k) = rel[static_cast<std::size_t>(k)]; break;
                case ContextLocation::absolute: out.features(row, dv + k) = abs[static_cast<std::size_t>(k)]; break;
                case ContextLocation::concat:
                    out.features(row, dv + k) = abs[static_cast<std::size_t>(k)];
                    out.features(row, dv + 5 + k) = rel[static_cast<std::size_t>(k)];
                    break;
            }
        }
    }
    return out;
}

/// Per-proposal cue features of one image; pure function of its geometry and provided features.
struct CueFeatures {
    Matrix subject;                     // N x D_s
    Matrix location;                    // N x 30
    Matrix context_raw;                 // N x D_v, the v_j features fed to object attention
    std::vector<ContextPairs> context;  // per target
    std::vector<int> categories;        // N
    std::vector<Box> boxes;             // N
    double width = 0.0;
    double height = 0.0;
    int context_dim = 0;                // D_v + location part

    int size() const { return static_cast<int>(subject.rows()); }
};

inline CueFeatures encode_scene(std::span<const Proposal> proposals, double width, double height, ContextMode mode,
                                ContextLocation loc = ContextLocation::relative) {
    if (proposals.empty()) throw std::invalid_argument("encode_scene: no proposals");
    const auto n = static_cast<Eigen::Index>(proposals.size());
    const auto ds = static_cast<Eigen::Index>(proposals.front().subject_feature.size());
    const auto dv = static_cast<Eigen::Index>(proposals.front().context_feature.size());
    CueFeatures f;
    f.width = width;
    f.height = height;
    f.subject.resize(n, ds);
    f.location.resize(n, kLocationDim);
    f.context_raw.resize(n, dv);
    f.context_dim = static_cast<int>(dv) + context_location_dim(loc);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Proposal& p = proposals[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(p.subject_feature.size()) != ds ||
            static_cast<Eigen::Index>(p.context_feature.size()) != dv) {
            throw std::invalid_argument("encode_scene: inconsistent feature dimensions");
        }
        f.subject.row(i) = Eigen::Map<const Eigen::RowVectorXd>(p.subject_feature.data(), ds);
        f.context_raw.row(i) = Eigen::Map<const Eigen::RowVectorXd>(p.context_feature.data(), dv);
        f.location.row(i) = encode_location(static_cast<int>(i), proposals, width, height);
        f.context.push_back(assemble_context_pairs(static_cast<int>(i), proposals, width, height, mode, loc));
        f.categories.push_back(p.category_id);
        f.boxes.push_back(p.box);
    }
    return f;
}

}  // namespace earn
