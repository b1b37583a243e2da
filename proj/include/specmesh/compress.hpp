#pragma once

#include "specmesh/pipeline.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace specmesh {

// Uniformly quantized GFT coefficients of one submesh, with per-axis
// dequantization parameters. Values hold q_c significant bits each.
struct EncodedBlock {
    std::uint32_t submesh_id = 0;
    std::uint32_t subspace_size = 0;
    std::array<double, 3> coeff_min{{0, 0, 0}};
    std::array<double, 3> coeff_max{{0, 0, 0}};
    std::array<std::uint8_t, 3> constant_axis{{0, 0, 0}};  // max == min on that axis
    std::vector<std::uint16_t> values;  // axis-major: c for x, c for y, c for z
};

// bpv = 3 * q_c * c * k / n with n the total vertex count.
inline double bits_per_vertex(int quant_bits, int subspace_size, int block_count, int vertex_count) {
    require(quant_bits > 0 && subspace_size > 0 && block_count > 0 && vertex_count > 0,
            "bits_per_vertex arguments must be positive");
    return 3.0 * quant_bits * subspace_size * block_count / static_cast<double>(vertex_count);
}

inline EncodedBlock encode_block(const Submesh& submesh, const Points& mesh_vertices,
                                 const SpectralBasis& basis, int quant_bits,
                                 std::uint32_t submesh_id = 0) {
    require(quant_bits >= 1 && quant_bits <= 16, "quantization bits must be in [1,16]");
    require(basis.rows() == submesh.size(), "basis does not match the submesh size");
    const Eigen::MatrixX3d coefficients = gft(basis, submesh.local_coords(mesh_vertices));
    const int c = static_cast<int>(coefficients.rows());
    const std::uint32_t levels = 1u << quant_bits;

    EncodedBlock block;
    block.submesh_id = submesh_id;
    block.subspace_size = static_cast<std::uint32_t>(c);
    block.values.assign(static_cast<std::size_t>(c) * 3, 0);
    for (int axis = 0; axis < 3; ++axis) {
        const double lo = coefficients.col(axis).minCoeff();
        const double hi = coefficients.col(axis).maxCoeff();
        block.coeff_min[axis] = lo;
        block.coeff_max[axis] = hi;
        if (!(hi > lo)) {
            block.constant_axis[axis] = 1;  // decodes to the constant `lo`
            continue;
        }
        const double step = (hi - lo) / levels;
        for (int i = 0; i < c; ++i) {
            auto q = static_cast<long>((coefficients(i, axis) - lo) / step);
            q = std::clamp(q, 0l, static_cast<long>(levels) - 1);
            block.values[static_cast<std::size_t>(axis) * c + i] = static_cast<std::uint16_t>(q);
        }
    }
    return block;
}

inline Eigen::MatrixX3d dequantize_block(const EncodedBlock& block, int quant_bits) {
    const int c = static_cast<int>(block.subspace_size);
    const std::uint32_t levels = 1u << quant_bits;
    Eigen::MatrixX3d coefficients(c, 3);
    for (int axis = 0; axis < 3; ++axis) {
        if (block.constant_axis[axis]) {
            coefficients.col(axis).setConstant(block.coeff_min[axis]);
            continue;
        }
        const double step = (block.coeff_max[axis] - block.coeff_min[axis]) / levels;
        for (int i = 0; i < c; ++i) {
            const std::uint16_t q = block.values[static_cast<std::size_t>(axis) * c + i];
            coefficients(i, axis) = block.coeff_min[axis] + (q + 0.5) * step;
        }
    }
    return coefficients;
}

// Dequantize + inverse GFT. The basis must be the decoder-side replay of the
// encoder's: same subspace size and block dimension.
inline Points decode_block(const EncodedBlock& block, const SpectralBasis& basis, int quant_bits) {
    if (basis.subspace_size() != static_cast<int>(block.subspace_size))
        throw Error("decode_block: basis subspace size does not match the block");
    return igft(basis, dequantize_block(block, quant_bits));
}

// ---------------------------------------------------------------------------
// Container

struct CompressionConfig {
    PipelineConfig pipeline;
    int quant_bits = 12;
};

// Everything the decoder needs: connectivity, replay configuration and the
// quantized coefficients per block. Vertex coordinates are never stored.
struct EncodedMesh {
    std::uint32_t version = 1;
    BasisMode basis_mode = BasisMode::OI;
    int quant_bits = 12;
    int part_count = 0;
    double growth = 1.15;
    int subspace_size = 0;
    double eps_low = 0.0, eps_high = 0.0;  // config echo; decode replays recorded sizes
    int c_min = 0, c_max = 0;
    int power = 2;
    int iterations = 2;
    int initial_iterations = 60;
    std::uint64_t seed = 1;
    int dense_limit = 4096;
    double shift_scale = 1e-8;
    std::uint32_t vertex_count = 0;
    Faces faces;
    std::vector<EncodedBlock> blocks;  // in submesh-order sequence

    PipelineConfig replay_config() const {
        PipelineConfig cfg;
        cfg.part_count = part_count;
        cfg.growth = growth;
        cfg.basis_mode = basis_mode;
        cfg.weighting = Weighting::Binary;  // decoder has no coordinates
        cfg.subspace_size = subspace_size;
        cfg.eps_low = eps_low;
        cfg.eps_high = eps_high;
        cfg.c_min = c_min;
        cfg.c_max = c_max;
        cfg.power = power;
        cfg.iterations = iterations;
        cfg.initial_iterations = initial_iterations;
        cfg.seed = seed;
        cfg.dense_limit = dense_limit;
        cfg.shift_scale = shift_scale;
        return cfg;
    }

    double total_bpv() const {
        std::uint64_t coeff_bits = 0;
        for (const auto& block : blocks)
            coeff_bits += static_cast<std::uint64_t>(3) * quant_bits * block.subspace_size;
        return static_cast<double>(coeff_bits) / vertex_count;
    }
};

// The spectral codec. Compression always uses the binary-weight Laplacian:
// distance weights need vertex positions, which the decoder does not have.
// In DOI mode the dynamic pass only selects each block's subspace size; the
// transmitted bases are the fixed-size OI chain the decoder replays.
inline EncodedMesh compress_mesh(const Mesh& mesh, const CompressionConfig& config,
                                 BlockBases* bases_out = nullptr, StageTimings* timings = nullptr) {
    mesh.validate();
    PipelineConfig cfg = config.pipeline;
    cfg.weighting = Weighting::Binary;
    const EdgeSet edges = build_edges(mesh);

    std::vector<int> sizes_in_order;
    if (cfg.basis_mode == BasisMode::DOI) {
        const BlockBases probe = compute_block_bases(mesh, edges, cfg);
        sizes_in_order = probe.sizes_in_order();
        if (timings) timings->merge(probe.timings);
    }

    BlockBases bases;
    if (cfg.basis_mode == BasisMode::SVD) {
        bases = compute_block_bases(mesh, edges, cfg);
        sizes_in_order = bases.sizes_in_order();
    } else {
        if (cfg.basis_mode == BasisMode::OI)
            sizes_in_order.assign(static_cast<std::size_t>(cfg.part_count), cfg.subspace_size);
        bases = compute_block_bases_fixed_sizes(mesh, edges, cfg, segment_mesh(mesh, edges, cfg),
                                                sizes_in_order);
    }
    if (timings) timings->merge(bases.timings);

    EncodedMesh encoded;
    encoded.basis_mode = cfg.basis_mode;
    encoded.quant_bits = config.quant_bits;
    encoded.part_count = cfg.part_count;
    encoded.growth = cfg.growth;
    encoded.subspace_size = cfg.subspace_size;
    encoded.eps_low = cfg.eps_low;
    encoded.eps_high = cfg.eps_high;
    encoded.c_min = cfg.c_min;
    encoded.c_max = cfg.c_max;
    encoded.power = cfg.power;
    encoded.iterations = cfg.iterations;
    encoded.initial_iterations = cfg.initial_iterations;
    encoded.seed = cfg.seed;
    encoded.dense_limit = cfg.dense_limit;
    encoded.shift_scale = cfg.shift_scale;
    encoded.vertex_count = static_cast<std::uint32_t>(mesh.vertex_count());
    encoded.faces = mesh.faces;

    Stopwatch encode_clock;
    encoded.blocks.reserve(bases.order.sequence.size());
    for (int id : bases.order.sequence)
        encoded.blocks.push_back(encode_block(bases.submeshes[id], mesh.vertices, bases.bases[id],
                                              config.quant_bits,
                                              static_cast<std::uint32_t>(id)));
    if (timings) timings->add("encode", encode_clock.seconds());
    if (bases_out) *bases_out = std::move(bases);
    return encoded;
}

// Replays segmentation and the basis chain from connectivity alone, decodes
// every block and stitches with degree-weighted averaging.
inline Mesh decompress_mesh(const EncodedMesh& encoded, BlockBases* bases_out = nullptr,
                            StageTimings* timings = nullptr) {
    Mesh skeleton;
    skeleton.vertices = Points::Zero(encoded.vertex_count, 3);
    skeleton.faces = encoded.faces;
    skeleton.validate();
    const EdgeSet edges = build_edges(skeleton);
    const PipelineConfig cfg = encoded.replay_config();

    Stopwatch basis_clock;
    BlockBases bases;
    if (encoded.basis_mode == BasisMode::SVD) {
        bases = compute_block_bases(skeleton, edges, cfg);
    } else {
        std::vector<int> sizes_in_order;
        sizes_in_order.reserve(encoded.blocks.size());
        for (const auto& block : encoded.blocks)
            sizes_in_order.push_back(static_cast<int>(block.subspace_size));
        bases = compute_block_bases_fixed_sizes(skeleton, edges, cfg,
                                                segment_mesh(skeleton, edges, cfg),
                                                sizes_in_order);
    }
    if (timings) {
        timings->merge(bases.timings);
        timings->add("decode_basis", basis_clock.seconds());
    }

    if (encoded.blocks.size() != bases.order.sequence.size())
        throw ParseError("encoded block count does not match the replayed segmentation");
    std::vector<Points> locals(bases.submeshes.size());
    for (std::size_t pos = 0; pos < encoded.blocks.size(); ++pos) {
        const EncodedBlock& block = encoded.blocks[pos];
        if (block.submesh_id >= locals.size() ||
            bases.order.sequence[pos] != static_cast<int>(block.submesh_id))
            throw ParseError("encoded block order does not match the replayed segmentation");
        locals[block.submesh_id] =
            decode_block(block, bases.bases[block.submesh_id], encoded.quant_bits);
    }

    Mesh out;
    out.vertices = reconstruct_weighted(bases.submeshes, locals,
                                        static_cast<int>(encoded.vertex_count),
                                        AverageMode::Weighted);
    out.faces = encoded.faces;
    if (bases_out) *bases_out = std::move(bases);
    return out;
}

// ---------------------------------------------------------------------------
// Bitstream serialization: little endian, coefficients bit-packed MSB-first.

namespace detail {

constexpr char kCodecMagic[8] = {'S', 'P', 'E', 'C', 'M', 'S', 'H', '1'};

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const char* data, std::size_t size) {
        bytes_.insert(bytes_.end(), data, data + size);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return next(); }
    std::uint16_t u16() {
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(next()) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(next()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(next()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void raw(char* out, std::size_t size) {
        if (at_ + size > size_) throw ParseError("bitstream truncated");
        std::memcpy(out, data_ + at_, size);
        at_ += size;
    }
    bool exhausted() const { return at_ == size_; }

private:
    std::uint8_t next() {
        if (at_ >= size_) throw ParseError("bitstream truncated");
        return data_[at_++];
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t at_ = 0;
};

class BitPacker {
public:
    explicit BitPacker(ByteWriter& out) : out_(out) {}
    void put(std::uint32_t value, int bits) {
        for (int b = bits - 1; b >= 0; --b) {
            buffer_ = static_cast<std::uint8_t>((buffer_ << 1) | ((value >> b) & 1u));
            if (++filled_ == 8) flush_byte();
        }
    }
    void pad_to_byte() {
        if (filled_ > 0) {
            buffer_ = static_cast<std::uint8_t>(buffer_ << (8 - filled_));
            filled_ = 8;
            flush_byte();
        }
    }

private:
    void flush_byte() {
        out_.u8(buffer_);
        buffer_ = 0;
        filled_ = 0;
    }
    ByteWriter& out_;
    std::uint8_t buffer_ = 0;
    int filled_ = 0;
};

class BitUnpacker {
public:
    explicit BitUnpacker(ByteReader& in) : in_(in) {}
    std::uint32_t get(int bits) {
        std::uint32_t value = 0;
        for (int b = 0; b < bits; ++b) {
            if (filled_ == 0) {
                buffer_ = in_.u8();
                filled_ = 8;
            }
            value = (value << 1) | ((buffer_ >> (filled_ - 1)) & 1u);
            --filled_;
        }
        return value;
    }
    void skip_to_byte() { filled_ = 0; }

private:
    ByteReader& in_;
    std::uint8_t buffer_ = 0;
    int filled_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_encoded_mesh(const EncodedMesh& encoded) {
    detail::ByteWriter out;
    out.raw(detail::kCodecMagic, 8);
    out.u32(encoded.version);
    out.u8(static_cast<std::uint8_t>(encoded.basis_mode));
    out.u8(0);  // weighting: binary, the only decodable choice
    out.u16(static_cast<std::uint16_t>(encoded.quant_bits));
    out.u32(static_cast<std::uint32_t>(encoded.part_count));
    out.f64(encoded.growth);
    out.u32(static_cast<std::uint32_t>(encoded.subspace_size));
    out.f64(encoded.eps_low);
    out.f64(encoded.eps_high);
    out.u32(static_cast<std::uint32_t>(encoded.c_min));
    out.u32(static_cast<std::uint32_t>(encoded.c_max));
    out.u32(static_cast<std::uint32_t>(encoded.power));
    out.u32(static_cast<std::uint32_t>(encoded.iterations));
    out.u32(static_cast<std::uint32_t>(encoded.initial_iterations));
    out.u64(encoded.seed);
    out.u32(static_cast<std::uint32_t>(encoded.dense_limit));
    out.f64(encoded.shift_scale);
    out.u32(encoded.vertex_count);
    out.u32(static_cast<std::uint32_t>(encoded.faces.rows()));
    for (Eigen::Index f = 0; f < encoded.faces.rows(); ++f)
        for (int k = 0; k < 3; ++k) out.u32(static_cast<std::uint32_t>(encoded.faces(f, k)));
    out.u32(static_cast<std::uint32_t>(encoded.blocks.size()));
    for (const auto& block : encoded.blocks) {
        out.u32(block.submesh_id);
        out.u32(block.subspace_size);
        out.u8(static_cast<std::uint8_t>(block.constant_axis[0] | (block.constant_axis[1] << 1) |
                                         (block.constant_axis[2] << 2)));
        for (int a = 0; a < 3; ++a) out.f64(block.coeff_min[a]);
        for (int a = 0; a < 3; ++a) out.f64(block.coeff_max[a]);
        detail::BitPacker packer(out);
        for (int a = 0; a < 3; ++a) {
            if (block.constant_axis[a]) continue;
            for (std::uint32_t i = 0; i < block.subspace_size; ++i)
                packer.put(block.values[static_cast<std::size_t>(a) * block.subspace_size + i],
                           encoded.quant_bits);
        }
        packer.pad_to_byte();
    }
    return out.take();
}

inline EncodedMesh parse_encoded_mesh(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader in(bytes.data(), bytes.size());
    char magic[8];
    in.raw(magic, 8);
    if (!std::equal(magic, magic + 8, detail::kCodecMagic))
        throw ParseError("not a specmesh bitstream (bad magic)");
    EncodedMesh encoded;
    encoded.version = in.u32();
    if (encoded.version != 1) throw ParseError("unsupported bitstream version");
    encoded.basis_mode = static_cast<BasisMode>(in.u8());
    in.u8();  // weighting, always binary
    encoded.quant_bits = in.u16();
    if (encoded.quant_bits < 1 || encoded.quant_bits > 16)
        throw ParseError("bitstream has invalid quantization bits");
    encoded.part_count = static_cast<int>(in.u32());
    encoded.growth = in.f64();
    encoded.subspace_size = static_cast<int>(in.u32());
    encoded.eps_low = in.f64();
    encoded.eps_high = in.f64();
    encoded.c_min = static_cast<int>(in.u32());
    encoded.c_max = static_cast<int>(in.u32());
    encoded.power = static_cast<int>(in.u32());
    encoded.iterations = static_cast<int>(in.u32());
    encoded.initial_iterations = static_cast<int>(in.u32());
    encoded.seed = in.u64();
    encoded.dense_limit = static_cast<int>(in.u32());
    encoded.shift_scale = in.f64();
    encoded.vertex_count = in.u32();
    const std::uint32_t face_count = in.u32();
    encoded.faces.resize(face_count, 3);
    for (std::uint32_t f = 0; f < face_count; ++f)
        for (int k = 0; k < 3; ++k) encoded.faces(f, k) = static_cast<int>(in.u32());
    const std::uint32_t block_count = in.u32();
    encoded.blocks.resize(block_count);
    for (auto& block : encoded.blocks) {
        block.submesh_id = in.u32();
        block.subspace_size = in.u32();
        const std::uint8_t flags = in.u8();
        for (int a = 0; a < 3; ++a) block.constant_axis[a] = (flags >> a) & 1u;
        for (int a = 0; a < 3; ++a) block.coeff_min[a] = in.f64();
        for (int a = 0; a < 3; ++a) block.coeff_max[a] = in.f64();
        block.values.assign(static_cast<std::size_t>(block.subspace_size) * 3, 0);
        detail::BitUnpacker unpacker(in);
        for (int a = 0; a < 3; ++a) {
            if (block.constant_axis[a]) continue;
            for (std::uint32_t i = 0; i < block.subspace_size; ++i)
                block.values[static_cast<std::size_t>(a) * block.subspace_size + i] =
                    static_cast<std::uint16_t>(unpacker.get(encoded.quant_bits));
        }
    }
    if (!in.exhausted()) throw ParseError("trailing bytes after bitstream payload");
    return encoded;
}

inline void write_encoded_mesh(const EncodedMesh& encoded, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_encoded_mesh(encoded);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + path + "'");
}

inline EncodedMesh read_encoded_mesh(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_encoded_mesh(bytes);
}

}  // namespace specmesh
