#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "errdetect/common.hpp"

namespace errdetect::io {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

class BinaryWriter {
public:
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void i64(std::int64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void f64s(const double* p, std::size_t n) {
        u64(n);
        raw(p, n * sizeof(double));
    }
    void f64s(const std::vector<double>& v) { f64s(v.data(), v.size()); }
    void u32s(const std::vector<std::uint32_t>& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(std::uint32_t));
    }
    void strs(const std::vector<std::string>& v) {
        u64(v.size());
        for (const auto& s : v) str(s);
    }

    const std::string& bytes() const noexcept { return buf_; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + path + "'");
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    }

private:
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    std::string buf_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::string bytes) : buf_(std::move(bytes)) {}

    static BinaryReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open '" + path + "'");
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return BinaryReader(std::move(bytes));
    }

    std::uint64_t u64() { return pod<std::uint64_t>(); }
    std::int64_t i64() { return pod<std::int64_t>(); }
    double f64() { return pod<double>(); }
    std::string str() {
        const auto n = u64();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> f64s() {
        const auto n = u64();
        need(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }
    std::vector<std::uint32_t> u32s() {
        const auto n = u64();
        need(n * sizeof(std::uint32_t));
        std::vector<std::uint32_t> v(n);
        std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(std::uint32_t));
        pos_ += n * sizeof(std::uint32_t);
        return v;
    }
    std::vector<std::string> strs() {
        const auto n = u64();
        std::vector<std::string> v;
        v.reserve(std::min<std::uint64_t>(n, 1 << 20));
        for (std::uint64_t i = 0; i < n; ++i) v.push_back(str());
        return v;
    }
    bool at_end() const noexcept { return pos_ == buf_.size(); }

private:
    template <typename T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::uint64_t n) const {
        if (n > buf_.size() - pos_) throw ParseError("truncated checkpoint");
    }

    std::string buf_;
    std::size_t pos_ = 0;
};

}  // namespace errdetect::io
