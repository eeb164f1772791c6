#pragma once

#include <vector>

#include "aqua/tape.hpp"

namespace aqua {

/// Fixed (non-trained) strided convolution pyramid standing in for a
/// pretrained perceptual backbone. Weights are seeded random and normalized
/// per filter to unit L1 mass, so each tanh stage is 1-Lipschitz and the
/// extractor is deterministic given the seed.
class FeatureExtractor {
public:
    static FeatureExtractor make_seeded(std::uint64_t seed, int channels = 8, int stages = 3) {
        FeatureExtractor fe;
        Rng rng(seed);
        int in_c = 3;
        for (int s = 0; s < stages; ++s) {
            ConvKernel k;
            k.in_c = in_c;
            k.out_c = channels;
            k.k = 3;
            k.w.resize(static_cast<std::size_t>(k.out_c) * k.in_c * k.k * k.k);
            for (double& w : k.w) w = rng.normal();
            for (int oc = 0; oc < k.out_c; ++oc) {
                double l1 = 0.0;
                for (int ic = 0; ic < k.in_c; ++ic)
                    for (int ky = 0; ky < k.k; ++ky)
                        for (int kx = 0; kx < k.k; ++kx) l1 += std::abs(k.at(oc, ic, ky, kx));
                if (l1 < 1e-12) l1 = 1.0;
                for (int ic = 0; ic < k.in_c; ++ic)
                    for (int ky = 0; ky < k.k; ++ky)
                        for (int kx = 0; kx < k.k; ++kx) k.at(oc, ic, ky, kx) /= l1;
            }
            fe.kernels_.push_back(std::move(k));
            in_c = channels;
        }
        return fe;
    }

    /// Feature maps phi_1..phi_S, one per stage (stride-2 conv + tanh).
    std::vector<DiffValue> pyramid(DiffValue rgb) const {
        std::vector<DiffValue> maps;
        DiffValue x = rgb;
        for (const ConvKernel& k : kernels_) {
            x = vtanh(conv2d(x, k, /*stride=*/2, /*pad=*/1));
            maps.push_back(x);
        }
        return maps;
    }

    int stages() const { return static_cast<int>(kernels_.size()); }

private:
    std::vector<ConvKernel> kernels_;
};

} // namespace aqua
