#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "vie/common.hpp"

namespace vie::detail {

// FFTW planning is not thread safe; execution with the new-array interface is.
inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

inline fftw_complex* as_fftw(cplx* p)
{
    return reinterpret_cast<fftw_complex*>(p);
}

/// Shared, immutable FFTW plan. Always created FFTW_UNALIGNED so it can run
/// on any caller-owned buffer through fftw_execute_dft.
class FftPlan {
public:
    FftPlan() = default;

    /// Batched transform: `rank` dims (slowest first), `howmany` contiguous
    /// batches of prod(dims) elements each.
    static FftPlan many(std::vector<int> dims, int howmany, int sign)
    {
        int total = 1;
        for (int d : dims) total *= d;
        std::vector<cplx> scratch(std::size_t(total) * std::size_t(howmany));
        std::lock_guard lock(fftw_planner_mutex());
        fftw_plan p = fftw_plan_many_dft(int(dims.size()), dims.data(), howmany, as_fftw(scratch.data()), nullptr, 1,
                                         total, as_fftw(scratch.data()), nullptr, 1, total, sign,
                                         FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!p) throw Error("FFTW planning failed");
        FftPlan out;
        out.plan_ = std::shared_ptr<fftw_plan_s>(p, [](fftw_plan q) {
            std::lock_guard guard(fftw_planner_mutex());
            fftw_destroy_plan(q);
        });
        out.size_ = std::size_t(total) * std::size_t(howmany);
        return out;
    }

    /// In-place execution on `data` (size must match the planned size).
    void execute(cplx* data) const { fftw_execute_dft(plan_.get(), as_fftw(data), as_fftw(data)); }
    std::size_t size() const { return size_; }
    explicit operator bool() const { return bool(plan_); }

private:
    std::shared_ptr<fftw_plan_s> plan_;
    std::size_t size_ = 0;
};

} // namespace vie::detail
