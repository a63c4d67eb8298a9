#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "deqann/deq.hpp"

namespace deqann {

namespace {

constexpr char kMagic[7] = {'D', 'E', 'Q', 'A', 'N', 'N', '1'};
constexpr std::size_t kTensorCount = 10;  // 9 parameter tensors + solver block

void write_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw FormatError("'" + path + "': truncated container");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& in, const std::string& path) {
    return std::bit_cast<double>(read_u64(in, path));
}

}  // namespace

void write_model(const DeqModel& model, const std::string& path) {
    model.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");

    DenseTensor solver_block({5}, std::vector<double>{static_cast<double>(model.solver.m),
                                                      model.solver.lambda, model.solver.beta,
                                                      model.solver.tol,
                                                      static_cast<double>(model.solver.max_iter)});
    const DenseTensor* tensors[kTensorCount] = {
        &model.layer.w_in, &model.layer.b1, &model.layer.u_inject, &model.layer.w_out,
        &model.layer.b2,   &model.w_head,   &model.b_head,         &model.norm_mean,
        &model.norm_std,   &solver_block};

    out.write(kMagic, sizeof(kMagic));
    write_u64(out, kTensorCount);
    for (const DenseTensor* t : tensors) {
        write_u64(out, t->ndim());
        for (std::size_t dim : t->shape()) write_u64(out, dim);
    }
    for (const DenseTensor* t : tensors) {
        for (std::size_t i = 0; i < t->size(); ++i) write_f64(out, (*t)[i]);
    }
    if (!out) throw Error("short write to '" + path + "'");
}

DeqModel read_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");

    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kMagic)) {
        throw FormatError("'" + path + "': not a model container (bad magic)");
    }
    const std::uint64_t count = read_u64(in, path);
    if (count != kTensorCount) {
        throw FormatError("'" + path + "': expected " + std::to_string(kTensorCount) +
                          " tensors, found " + std::to_string(count));
    }

    std::vector<std::vector<std::size_t>> shapes(kTensorCount);
    for (auto& shape : shapes) {
        const std::uint64_t ndim = read_u64(in, path);
        if (ndim > 4) throw FormatError("'" + path + "': implausible tensor rank");
        shape.resize(ndim);
        for (auto& dim : shape) dim = static_cast<std::size_t>(read_u64(in, path));
    }
    std::vector<DenseTensor> tensors;
    tensors.reserve(kTensorCount);
    for (const auto& shape : shapes) {
        DenseTensor t(shape);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_f64(in, path);
        tensors.push_back(std::move(t));
    }

    DeqModel m;
    m.layer.w_in = std::move(tensors[0]);
    m.layer.b1 = std::move(tensors[1]);
    m.layer.u_inject = std::move(tensors[2]);
    m.layer.w_out = std::move(tensors[3]);
    m.layer.b2 = std::move(tensors[4]);
    m.w_head = std::move(tensors[5]);
    m.b_head = std::move(tensors[6]);
    m.norm_mean = std::move(tensors[7]);
    m.norm_std = std::move(tensors[8]);
    if (m.layer.w_in.ndim() != 2) throw FormatError("'" + path + "': w_in must be rank 2");
    m.layer.k1 = m.layer.w_in.dim(0);
    m.layer.d = m.layer.w_in.dim(1);

    const DenseTensor& sb = tensors[9];
    if (sb.shape() != std::vector<std::size_t>{5}) {
        throw FormatError("'" + path + "': solver block must hold 5 values");
    }
    const double m_val = sb[0], max_iter_val = sb[4];
    if (!(m_val >= 1.0) || m_val != std::floor(m_val) || !(max_iter_val >= 2.0) ||
        max_iter_val != std::floor(max_iter_val)) {
        throw FormatError("'" + path + "': solver block has non-integral counts");
    }
    m.solver.m = static_cast<std::size_t>(m_val);
    m.solver.lambda = sb[1];
    m.solver.beta = sb[2];
    m.solver.tol = sb[3];
    m.solver.max_iter = static_cast<std::size_t>(max_iter_val);

    try {
        m.validate();
    } catch (const Error& e) {
        throw FormatError("'" + path + "': inconsistent model: " + e.what());
    }
    return m;
}

}  // namespace deqann
