#include "usseg/volume.hpp"

#include "usseg/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace usseg {

std::size_t Mask2D::count() const {
    std::size_t n = 0;
    for (uint8_t x : v) n += (x != 0);
    return n;
}

ScanVolume::ScanVolume(uint32_t n_frames, uint32_t n_time, uint32_t n_beams, VolumeKind kind,
                       AxisCalib calib)
    : n_frames_(n_frames), n_time_(n_time), n_beams_(n_beams), kind_(kind), calib_(calib),
      data_(static_cast<std::size_t>(n_frames) * n_time * n_beams, 0.0f) {
    if (n_frames == 0 || n_time == 0 || n_beams == 0)
        throw std::invalid_argument("ScanVolume: all dimensions must be >= 1");
}

ScanVolume ScanVolume::from_data(uint32_t n_frames, uint32_t n_time, uint32_t n_beams,
                                 VolumeKind kind, AxisCalib calib, std::vector<float> data) {
    ScanVolume vol(n_frames, n_time, n_beams, kind, calib);
    if (data.size() != vol.data_.size())
        throw FormatError("ScanVolume: payload length " + std::to_string(data.size()) +
                          " does not match dims " + std::to_string(n_frames) + "x" +
                          std::to_string(n_time) + "x" + std::to_string(n_beams));
    vol.data_ = std::move(data);
    vol.validate();
    return vol;
}

void ScanVolume::validate() const {
    if (kind_ == VolumeKind::envelope) {
        for (float x : data_)
            if (!(x >= 0.0f))
                throw FormatError("ScanVolume: envelope volume holds a negative value");
    } else if (kind_ == VolumeKind::mask) {
        for (float x : data_)
            if (x != 0.0f && x != 1.0f)
                throw FormatError("ScanVolume: mask volume holds a non-binary value");
    }
    if (calib_.front_wall_index >= n_time_)
        throw FormatError("ScanVolume: front_wall_index must be < n_time");
    if (!(calib_.scan_step_mm > 0.0) || !(calib_.beam_pitch_mm > 0.0) ||
        !(calib_.sample_rate_hz > 0.0) || !(calib_.velocity_mm_per_us > 0.0))
        throw FormatError("ScanVolume: calibration fields must be strictly positive");
}

// --- USV serialization ----------------------------------------------------

namespace {

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

class Reader {
public:
    Reader(const uint8_t* p, std::size_t n, const std::string& path)
        : p_(p), n_(n), path_(path) {}

    uint32_t u32(const char* field) {
        if (pos_ + 4 > n_)
            throw FormatError(path_ + ": truncated header while reading " + std::string(field));
        uint32_t v = static_cast<uint32_t>(p_[pos_]) | (static_cast<uint32_t>(p_[pos_ + 1]) << 8) |
                     (static_cast<uint32_t>(p_[pos_ + 2]) << 16) |
                     (static_cast<uint32_t>(p_[pos_ + 3]) << 24);
        pos_ += 4;
        return v;
    }
    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
    std::size_t pos() const { return pos_; }

private:
    const uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
    std::string path_;
};

} // namespace

void write_volume(const ScanVolume& vol, const std::string& path) {
    vol.validate();
    std::string header;
    header.reserve(kUsvHeaderBytes);
    header += "USVF";
    put_u32(header, 1);
    put_u32(header, static_cast<uint32_t>(vol.kind()));
    put_u32(header, vol.n_frames());
    put_u32(header, vol.n_time());
    put_u32(header, vol.n_beams());
    put_f32(header, static_cast<float>(vol.calib().scan_step_mm));
    put_f32(header, static_cast<float>(vol.calib().beam_pitch_mm));
    put_f32(header, static_cast<float>(vol.calib().sample_rate_hz));
    put_f32(header, static_cast<float>(vol.calib().velocity_mm_per_us));
    put_u32(header, vol.calib().front_wall_index);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_volume: cannot open " + path);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    std::string payload;
    payload.reserve(vol.size() * 4);
    if constexpr (std::endian::native == std::endian::little) {
        payload.assign(reinterpret_cast<const char*>(vol.data().data()), vol.size() * 4);
    } else {
        for (float x : vol.data()) put_f32(payload, x);
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("write_volume: I/O failure writing " + path);
}

ScanVolume read_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_volume: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < kUsvHeaderBytes)
        throw FormatError(path + ": file shorter than the USV header");
    if (std::memcmp(bytes.data(), "USVF", 4) != 0)
        throw FormatError(path + ": bad magic (expected USVF)");

    Reader r(reinterpret_cast<const uint8_t*>(bytes.data()) + 4, bytes.size() - 4, path);
    const uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    const uint32_t kind_raw = r.u32("kind");
    if (kind_raw > 2) throw FormatError(path + ": invalid kind " + std::to_string(kind_raw));
    const uint32_t n_frames = r.u32("n_frames");
    const uint32_t n_time = r.u32("n_time");
    const uint32_t n_beams = r.u32("n_beams");
    AxisCalib calib;
    calib.scan_step_mm = r.f32("scan_step_mm");
    calib.beam_pitch_mm = r.f32("beam_pitch_mm");
    calib.sample_rate_hz = r.f32("sample_rate_hz");
    calib.velocity_mm_per_us = r.f32("velocity_mm_per_us");
    calib.front_wall_index = r.u32("front_wall_index");

    if (n_frames == 0 || n_time == 0 || n_beams == 0)
        throw FormatError(path + ": dims must all be >= 1");
    const std::size_t count =
        static_cast<std::size_t>(n_frames) * n_time * n_beams;
    const std::size_t expect = kUsvHeaderBytes + count * 4;
    if (bytes.size() < expect)
        throw FormatError(path + ": truncated payload (expected " + std::to_string(expect) +
                          " bytes, found " + std::to_string(bytes.size()) + ")");
    if (bytes.size() > expect)
        throw FormatError(path + ": trailing bytes after payload");

    std::vector<float> data(count);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(data.data(), bytes.data() + kUsvHeaderBytes, count * 4);
    } else {
        const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data()) + kUsvHeaderBytes;
        for (std::size_t i = 0; i < count; ++i) {
            uint32_t v = static_cast<uint32_t>(p[4 * i]) | (static_cast<uint32_t>(p[4 * i + 1]) << 8) |
                         (static_cast<uint32_t>(p[4 * i + 2]) << 16) |
                         (static_cast<uint32_t>(p[4 * i + 3]) << 24);
            data[i] = std::bit_cast<float>(v);
        }
    }
    return ScanVolume::from_data(n_frames, n_time, n_beams, static_cast<VolumeKind>(kind_raw),
                                 calib, std::move(data));
}

// --- Envelope -------------------------------------------------------------

ScanVolume envelope(const ScanVolume& vol) {
    if (vol.kind() != VolumeKind::rf)
        throw std::invalid_argument("envelope: input must be an rf volume");
    const uint32_t T = vol.n_time();

    fftw_complex* buf = fftw_alloc_complex(T);
    fftw_plan fwd = fftw_plan_dft_1d(static_cast<int>(T), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_plan inv = fftw_plan_dft_1d(static_cast<int>(T), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);

    // Analytic-signal frequency mask: keep DC (and Nyquist for even T),
    // double the positive frequencies, zero the negative ones.
    std::vector<double> mask(T, 0.0);
    mask[0] = 1.0;
    if (T % 2 == 0) {
        mask[T / 2] = 1.0;
        for (uint32_t k = 1; k < T / 2; ++k) mask[k] = 2.0;
    } else {
        for (uint32_t k = 1; k <= (T - 1) / 2; ++k) mask[k] = 2.0;
    }

    ScanVolume out(vol.n_frames(), T, vol.n_beams(), VolumeKind::envelope, vol.calib());
    for (uint32_t f = 0; f < vol.n_frames(); ++f) {
        for (uint32_t b = 0; b < vol.n_beams(); ++b) {
            for (uint32_t t = 0; t < T; ++t) {
                buf[t][0] = vol.at(f, t, b);
                buf[t][1] = 0.0;
            }
            fftw_execute(fwd);
            for (uint32_t k = 0; k < T; ++k) {
                buf[k][0] *= mask[k];
                buf[k][1] *= mask[k];
            }
            fftw_execute(inv);
            const double inv_n = 1.0 / static_cast<double>(T);
            for (uint32_t t = 0; t < T; ++t) {
                const double re = buf[t][0] * inv_n;
                const double im = buf[t][1] * inv_n;
                out.at(f, t, b) = static_cast<float>(std::hypot(re, im));
            }
        }
    }
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
    fftw_free(buf);
    return out;
}

// --- Geometry ops ----------------------------------------------------------

ScanVolume downsample_time(const ScanVolume& vol, uint32_t factor) {
    if (factor == 0) throw std::invalid_argument("downsample_time: factor must be >= 1");
    if (factor == 1) return vol;
    const uint32_t kept = (vol.n_time() + factor - 1) / factor;
    AxisCalib calib = vol.calib();
    calib.sample_rate_hz /= static_cast<double>(factor);
    calib.front_wall_index /= factor;
    ScanVolume out(vol.n_frames(), kept, vol.n_beams(), vol.kind(), calib);
    for (uint32_t f = 0; f < vol.n_frames(); ++f)
        for (uint32_t t = 0; t < kept; ++t)
            for (uint32_t b = 0; b < vol.n_beams(); ++b)
                out.at(f, t, b) = vol.at(f, t * factor, b);
    return out;
}

namespace {
void check_gate(const ScanVolume& vol, uint32_t t_lo, uint32_t t_hi) {
    if (t_lo >= t_hi || t_hi > vol.n_time())
        throw std::invalid_argument("time gate [" + std::to_string(t_lo) + ", " +
                                    std::to_string(t_hi) + ") is empty or out of range");
}
} // namespace

Field2D cscan_amplitude(const ScanVolume& vol, uint32_t t_lo, uint32_t t_hi) {
    check_gate(vol, t_lo, t_hi);
    Field2D field(static_cast<int>(vol.n_frames()), static_cast<int>(vol.n_beams()));
    for (uint32_t f = 0; f < vol.n_frames(); ++f)
        for (uint32_t b = 0; b < vol.n_beams(); ++b) {
            double m = vol.at(f, t_lo, b);
            for (uint32_t t = t_lo + 1; t < t_hi; ++t) m = std::max(m, double(vol.at(f, t, b)));
            field.at(static_cast<int>(f), static_cast<int>(b)) = m;
        }
    return field;
}

Mask2D cscan_mask(const ScanVolume& vol, uint32_t t_lo, uint32_t t_hi) {
    check_gate(vol, t_lo, t_hi);
    Mask2D field(static_cast<int>(vol.n_frames()), static_cast<int>(vol.n_beams()));
    for (uint32_t f = 0; f < vol.n_frames(); ++f)
        for (uint32_t b = 0; b < vol.n_beams(); ++b) {
            uint8_t any = 0;
            for (uint32_t t = t_lo; t < t_hi && !any; ++t) any = vol.at(f, t, b) != 0.0f;
            field.at(static_cast<int>(f), static_cast<int>(b)) = any;
        }
    return field;
}

ScanVolume pad_scan_axis(const ScanVolume& vol, uint32_t width, PadMode mode) {
    if (width == 0) return vol;
    if (mode == PadMode::reflect && width >= vol.n_frames())
        throw std::invalid_argument("pad_scan_axis: reflect width must be < n_frames");
    ScanVolume out(vol.n_frames() + width, vol.n_time(), vol.n_beams(), vol.kind(), vol.calib());
    const std::size_t frame_size = static_cast<std::size_t>(vol.n_time()) * vol.n_beams();
    auto copy_frame = [&](uint32_t dst, uint32_t src) {
        std::copy_n(vol.data().data() + static_cast<std::size_t>(src) * frame_size, frame_size,
                    out.data().data() + static_cast<std::size_t>(dst) * frame_size);
    };
    for (uint32_t i = 0; i < width; ++i) {
        switch (mode) {
        case PadMode::edge: copy_frame(i, 0); break;
        case PadMode::reflect: copy_frame(i, width - i); break;
        case PadMode::zero: break; // already zero-filled
        }
    }
    for (uint32_t f = 0; f < vol.n_frames(); ++f) copy_frame(width + f, f);
    return out;
}

ScanVolume reverse_frames(const ScanVolume& vol) {
    ScanVolume out(vol.n_frames(), vol.n_time(), vol.n_beams(), vol.kind(), vol.calib());
    const std::size_t frame_size = static_cast<std::size_t>(vol.n_time()) * vol.n_beams();
    for (uint32_t f = 0; f < vol.n_frames(); ++f)
        std::copy_n(vol.data().data() + static_cast<std::size_t>(f) * frame_size, frame_size,
                    out.data().data() +
                        static_cast<std::size_t>(vol.n_frames() - 1 - f) * frame_size);
    return out;
}

Field2D bscan(const ScanVolume& vol, uint32_t frame) {
    if (frame >= vol.n_frames()) throw std::invalid_argument("bscan: frame out of range");
    Field2D field(static_cast<int>(vol.n_time()), static_cast<int>(vol.n_beams()));
    for (uint32_t t = 0; t < vol.n_time(); ++t)
        for (uint32_t b = 0; b < vol.n_beams(); ++b)
            field.at(static_cast<int>(t), static_cast<int>(b)) = vol.at(frame, t, b);
    return field;
}

void write_pgm(const Field2D& field, const std::string& path) {
    double vmax = 0.0;
    for (double x : field.v) vmax = std::max(vmax, x);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
    out << "P5\n" << field.cols << " " << field.rows << "\n255\n";
    std::string row;
    row.reserve(field.v.size());
    for (double x : field.v) {
        double norm = vmax > 0.0 ? std::clamp(x / vmax, 0.0, 1.0) : 0.0;
        row.push_back(static_cast<char>(std::lround(255.0 * norm)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
    if (!out) throw std::runtime_error("write_pgm: I/O failure writing " + path);
}

} // namespace usseg
