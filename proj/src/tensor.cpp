#include "dprp/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dprp {

namespace {
Precision g_precision = Precision::f64;
}

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

long long shape_numel(const std::vector<int>& shape) {
    long long n = 1;
    for (int e : shape) {
        if (e <= 0) throw_error(ErrorKind::dimension, "tensor extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<long long>(data.size()))
        throw_error(ErrorKind::dimension,
                    "tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
}

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
}

Tensor Tensor::identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

double quantize(double v) {
    if (g_precision == Precision::f32) return static_cast<double>(static_cast<float>(v));
    return v;
}

void quantize_inplace(Tensor& t) {
    if (g_precision != Precision::f32) return;
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

void ensure_finite(const Tensor& t, const char* op) {
    for (double v : t.data) {
        if (!std::isfinite(v))
            throw_error(ErrorKind::numeric, std::string("non-finite value produced by op '") + op + "'");
    }
}

double dot(const double* a, const double* b, long long n) {
    double acc = 0.0;
    for (long long i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double frobenius_norm(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data) acc += v * v;
    return std::sqrt(acc);
}

}  // namespace dprp
