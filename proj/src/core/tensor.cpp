#include "lns/core/tensor.hpp"

#include <atomic>

namespace lns {

namespace {
std::atomic<int64_t> g_current_bytes{0};
std::atomic<int64_t> g_peak_bytes{0};

void note_alloc(int64_t bytes) {
    int64_t cur = g_current_bytes.fetch_add(bytes) + bytes;
    int64_t peak = g_peak_bytes.load();
    while (cur > peak && !g_peak_bytes.compare_exchange_weak(peak, cur)) {
    }
}

void note_free(int64_t bytes) { g_current_bytes.fetch_sub(bytes); }
} // namespace

namespace alloc_stats {
int64_t current_bytes() { return g_current_bytes.load(); }
int64_t peak_bytes() { return g_peak_bytes.load(); }
void reset_peak() { g_peak_bytes.store(g_current_bytes.load()); }
}

void Tensor::reset(std::vector<int64_t> shape) {
    shape_ = std::move(shape);
    size_ = 1;
    for (int64_t s : shape_) {
        check(s > 0, ErrorCode::ShapeMismatch, "Tensor: non-positive dimension");
        size_ *= s;
    }
    int64_t bytes = size_ * static_cast<int64_t>(sizeof(double));
    double* p = new double[static_cast<size_t>(size_)]();
    note_alloc(bytes);
    data_ = std::shared_ptr<double[]>(p, [bytes](double* q) {
        note_free(bytes);
        delete[] q;
    });
}

} // namespace lns
