#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dprp/error.hpp"

namespace dprp {

// Global numeric precision. In f32 mode every op result, gradient, and
// parameter update is rounded to 32-bit float before it is stored;
// arithmetic inside an op accumulates in double.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

// RAII helper for tests that need to switch precision temporarily.
class PrecisionScope {
  public:
    explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
    ~PrecisionScope() { set_precision(saved_); }
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

  private:
    Precision saved_;
};

// Dense N-dimensional array, row-major. Scalars have an empty shape and one
// element. Raw buffers are always double; precision rounding happens at op
// boundaries (see autograd.cpp) and on parameter updates.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v);
    static Tensor scalar(double v) { return Tensor({}, {v}); }
    static Tensor identity(int n);

    int rank() const { return static_cast<int>(shape.size()); }
    long long numel() const { return static_cast<long long>(data.size()); }

    double& operator()(int i) { return data[static_cast<size_t>(i)]; }
    double operator()(int i) const { return data[static_cast<size_t>(i)]; }
    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& operator()(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double operator()(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double& operator()(int i, int j, int k, int l) {
        return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    double operator()(int i, int j, int k, int l) const {
        return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

long long shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Rounds v to f32 when the engine runs in f32 mode.
double quantize(double v);
void quantize_inplace(Tensor& t);

// Throws a numeric error naming `op` if any entry is NaN or Inf.
void ensure_finite(const Tensor& t, const char* op);

double dot(const double* a, const double* b, long long n);
double frobenius_norm(const Tensor& t);

}  // namespace dprp
