#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

namespace isingkac {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

// Writes to `path.tmp` and renames on commit, so readers never observe a partial file.
class BinaryWriter {
public:
    explicit BinaryWriter(std::string path);
    ~BinaryWriter();
    BinaryWriter(const BinaryWriter&) = delete;
    BinaryWriter& operator=(const BinaryWriter&) = delete;

    void magic(const char (&tag)[5]) { raw(tag, 4); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void i8(std::int8_t v) { raw(&v, sizeof v); }
    void raw(const void* data, std::size_t n);
    void commit();

private:
    std::string path_;
    std::string tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path);

    void expect_magic(const char (&tag)[5]);
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    double f64() { return get<double>(); }
    std::int8_t i8() { return get<std::int8_t>(); }
    bool at_end();

private:
    template <class T>
    T get() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in_) throw std::runtime_error("unexpected end of binary file");
        return v;
    }
    std::ifstream in_;
};

}  // namespace isingkac
