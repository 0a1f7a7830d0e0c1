#include "isingkac/binary_io.hpp"

#include <cstdio>
#include <cstring>

namespace isingkac {

BinaryWriter::BinaryWriter(std::string path) : path_(std::move(path)), tmp_(path_ + ".tmp") {
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open " + tmp_ + " for writing");
}

BinaryWriter::~BinaryWriter() {
    if (!committed_) {
        out_.close();
        std::remove(tmp_.c_str());
    }
}

void BinaryWriter::raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void BinaryWriter::commit() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed for " + tmp_);
    if (std::rename(tmp_.c_str(), path_.c_str()) != 0) {
        throw std::runtime_error("cannot rename " + tmp_ + " to " + path_);
    }
    committed_ = true;
}

BinaryReader::BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path);
}

void BinaryReader::expect_magic(const char (&tag)[5]) {
    char buf[4];
    in_.read(buf, 4);
    if (!in_ || std::memcmp(buf, tag, 4) != 0) throw std::runtime_error("bad magic, expected " + std::string(tag));
}

bool BinaryReader::at_end() { return in_.peek() == std::char_traits<char>::eof(); }

}  // namespace isingkac
