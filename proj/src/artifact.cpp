#include "mva/artifact.hpp"

#include <cmath>
#include <cstring>
#include <map>

#include <zlib.h>

#include "mva/byte_io.hpp"
#include "mva/common.hpp"

namespace mva {

namespace {

constexpr char kMagic[] = "MVAM";
constexpr const char* kSections[] = {"PREP", "VAEP", "DETC", "LOCL", "BASE", "SEED"};

std::uint32_t crc32_of(std::span<const std::uint8_t> b) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, b.data(), static_cast<uInt>(b.size()));
    return static_cast<std::uint32_t>(crc);
}

void put_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.f64s({m.data(), static_cast<std::size_t>(m.size())});
}

Eigen::MatrixXd get_matrix(ByteReader& r) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    const auto v = r.f64s(static_cast<std::size_t>(rows) * cols);
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

void put_vector(ByteWriter& w, std::span<const double> v) {
    w.u64(v.size());
    w.f64s(v);
}

std::vector<double> get_vector(ByteReader& r) {
    const auto n = r.u64();
    if (n > r.remaining() / sizeof(double)) {
        throw FormatError("model vector length " + std::to_string(n) + " exceeds section size");
    }
    return r.f64s(static_cast<std::size_t>(n));
}

void put_layer(ByteWriter& w, const DenseLayer& l) {
    put_matrix(w, l.weight);
    put_vector(w, {l.bias.data(), static_cast<std::size_t>(l.bias.size())});
}

DenseLayer get_layer(ByteReader& r) {
    DenseLayer l;
    l.weight = get_matrix(r);
    const auto b = get_vector(r);
    l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    return l;
}

void put_layers(ByteWriter& w, const std::vector<DenseLayer>& ls) {
    w.u32(static_cast<std::uint32_t>(ls.size()));
    for (const auto& l : ls) {
        put_layer(w, l);
    }
}

std::vector<DenseLayer> get_layers(ByteReader& r) {
    const auto n = r.u32();
    std::vector<DenseLayer> out;
    for (std::uint32_t i = 0; i < n; ++i) {
        out.push_back(get_layer(r));
    }
    return out;
}

void put_strings(ByteWriter& w, const std::vector<std::string>& s) {
    w.u32(static_cast<std::uint32_t>(s.size()));
    for (const auto& x : s) {
        w.str(x);
    }
}

std::vector<std::string> get_strings(ByteReader& r) {
    const auto n = r.u32();
    std::vector<std::string> out;
    for (std::uint32_t i = 0; i < n; ++i) {
        out.push_back(r.str());
    }
    return out;
}

void put_section(ByteWriter& w, const char* tag, const ByteWriter& payload) {
    w.chars(std::string_view(tag, 4));
    w.u64(payload.data().size());
    w.bytes(payload.data());
}

Activation activation_from_code(std::uint8_t c) {
    if (c > static_cast<std::uint8_t>(Activation::tanh)) {
        throw FormatError("model has unknown activation code " + std::to_string(c));
    }
    return static_cast<Activation>(c);
}

void expect_consumed(const ByteReader& r, const std::string& tag) {
    if (r.remaining() != 0) {
        throw FormatError("model section " + tag + " has " + std::to_string(r.remaining()) + " trailing bytes");
    }
}

}  // namespace

void ModelArtifact::validate() const {
    vae.validate();
    const std::size_t d = sensor_labels.size() * features;
    if (d == 0 || vae.input_width() != d) {
        throw InvalidModel("model input width " + std::to_string(vae.input_width()) + " does not match " +
                           std::to_string(sensor_labels.size()) + " sensors x " + std::to_string(features) +
                           " features");
    }
    if (scaler.mean.size() != d || scaler.stddev.size() != d) {
        throw InvalidModel("standardization statistics do not match the model input width");
    }
    if (baseline.sensor_labels != sensor_labels) {
        throw InvalidModel("localization baseline sensor labels differ from the model's");
    }
    if (!std::isfinite(threshold)) {
        throw InvalidModel("detection threshold is not finite");
    }
}

std::vector<std::uint8_t> serialize_artifact(const ModelArtifact& a) {
    ByteWriter w;
    w.chars(std::string_view(kMagic, 4));
    w.u32(a.format_version);

    ByteWriter prep;
    prep.u64(a.preprocess.keep_bins);
    prep.u8(a.preprocess.pair_difference ? 1 : 0);
    put_strings(prep, a.sensor_labels);
    prep.u64(a.features);
    put_vector(prep, a.scaler.mean);
    put_vector(prep, a.scaler.stddev);
    put_section(w, "PREP", prep);

    ByteWriter vae;
    vae.u8(static_cast<std::uint8_t>(a.vae.activation));
    put_layers(vae, a.vae.encoder_trunk);
    put_layer(vae, a.vae.encoder_head.mu);
    put_layer(vae, a.vae.encoder_head.log_var);
    put_layers(vae, a.vae.decoder_trunk);
    put_layer(vae, a.vae.decoder_head.mu);
    put_layer(vae, a.vae.decoder_head.log_var);
    put_section(w, "VAEP", vae);

    ByteWriter det;
    det.u64(a.detection.mc_samples);
    det.f64(a.detection.threshold_quantile);
    det.u64(a.detection.calibration_folds);
    det.u64(a.detection.seed);
    det.f64(a.threshold);
    put_section(w, "DETC", det);

    ByteWriter loc;
    loc.u64(a.localization.k);
    loc.u64(a.localization.mc_samples);
    loc.u64(a.localization.seed);
    loc.u8(static_cast<std::uint8_t>(a.localization.profile));
    put_section(w, "LOCL", loc);

    ByteWriter base;
    put_strings(base, a.baseline.sensor_labels);
    base.u64(a.baseline.profile_width);
    base.u32(static_cast<std::uint32_t>(a.baseline.profiles.size()));
    for (const auto& p : a.baseline.profiles) {
        const Eigen::MatrixXd m = p;
        put_matrix(base, m);
    }
    const Eigen::MatrixXd summary = a.baseline.summary;
    put_matrix(base, summary);
    put_section(w, "BASE", base);

    ByteWriter seed;
    seed.u64(a.seeds.run_seed);
    seed.u64(a.seeds.train_seed);
    seed.u64(a.seeds.detection_seed);
    put_section(w, "SEED", seed);

    w.u32(crc32_of(w.data()));
    return std::move(w.data());
}

ModelArtifact deserialize_artifact(std::span<const std::uint8_t> bytes, const std::string& context) {
    if (bytes.size() < 12 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kMagic) {
        throw FormatError(context + ": not a model file (bad magic)");
    }
    ByteReader head(bytes, context);
    head.fixed(4);
    const auto version = head.u32();
    if (version != kArtifactVersion) {
        throw FormatError(context + ": model format version " + std::to_string(version) + ", this build reads version " +
                          std::to_string(kArtifactVersion));
    }
    const auto body = bytes.first(bytes.size() - 4);
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + body.size(), 4);
    if (crc32_of(body) != stored) {
        throw FormatError(context + ": CRC32 mismatch, file is corrupt");
    }

    ByteReader r(body, context);
    r.fixed(8);
    std::map<std::string, std::span<const std::uint8_t>> sections;
    std::vector<std::string> order;
    while (r.remaining() > 0) {
        const std::string tag = r.fixed(4);
        const auto len = r.u64();
        if (len > r.remaining()) {
            throw FormatError(context + ": section " + tag + " overruns the file");
        }
        if (sections.count(tag)) {
            throw FormatError(context + ": duplicate section " + tag);
        }
        sections[tag] = r.take_bytes(static_cast<std::size_t>(len));
        order.push_back(tag);
    }
    for (std::size_t i = 0; i < std::size(kSections); ++i) {
        if (i >= order.size() || order[i] != kSections[i]) {
            throw FormatError(context + ": expected section " + std::string(kSections[i]) + " at position " +
                              std::to_string(i));
        }
    }
    if (order.size() != std::size(kSections)) {
        throw FormatError(context + ": unexpected section " + order[std::size(kSections)]);
    }

    ModelArtifact a;
    a.format_version = version;
    {
        ByteReader prep(sections["PREP"], context + " PREP");
        a.preprocess.keep_bins = prep.u64();
        a.preprocess.pair_difference = prep.u8() != 0;
        a.sensor_labels = get_strings(prep);
        a.features = prep.u64();
        a.scaler.mean = get_vector(prep);
        a.scaler.stddev = get_vector(prep);
        expect_consumed(prep, "PREP");

        ByteReader vae(sections["VAEP"], context + " VAEP");
        a.vae.activation = activation_from_code(vae.u8());
        a.vae.encoder_trunk = get_layers(vae);
        a.vae.encoder_head.mu = get_layer(vae);
        a.vae.encoder_head.log_var = get_layer(vae);
        a.vae.decoder_trunk = get_layers(vae);
        a.vae.decoder_head.mu = get_layer(vae);
        a.vae.decoder_head.log_var = get_layer(vae);
        expect_consumed(vae, "VAEP");

        ByteReader det(sections["DETC"], context + " DETC");
        a.detection.mc_samples = det.u64();
        a.detection.threshold_quantile = det.f64();
        a.detection.calibration_folds = det.u64();
        a.detection.seed = det.u64();
        a.threshold = det.f64();
        expect_consumed(det, "DETC");

        ByteReader loc(sections["LOCL"], context + " LOCL");
        a.localization.k = loc.u64();
        a.localization.mc_samples = loc.u64();
        a.localization.seed = loc.u64();
        const auto profile = loc.u8();
        if (profile > static_cast<std::uint8_t>(ProfileWidth::mean)) {
            throw FormatError(context + ": unknown profile width code " + std::to_string(profile));
        }
        a.localization.profile = static_cast<ProfileWidth>(profile);
        expect_consumed(loc, "LOCL");

        ByteReader base(sections["BASE"], context + " BASE");
        a.baseline.sensor_labels = get_strings(base);
        a.baseline.profile_width = base.u64();
        const auto np = base.u32();
        for (std::uint32_t i = 0; i < np; ++i) {
            a.baseline.profiles.emplace_back(get_matrix(base));
        }
        a.baseline.summary = get_matrix(base);
        expect_consumed(base, "BASE");

        ByteReader seed(sections["SEED"], context + " SEED");
        a.seeds.run_seed = seed.u64();
        a.seeds.train_seed = seed.u64();
        a.seeds.detection_seed = seed.u64();
        expect_consumed(seed, "SEED");
    }
    try {
        a.validate();
    } catch (const Error& e) {
        throw FormatError(context + ": " + e.what());
    }
    return a;
}

void save_artifact(const std::filesystem::path& path, const ModelArtifact& a) {
    a.validate();
    write_file_bytes(path, serialize_artifact(a));
}

ModelArtifact load_artifact(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return deserialize_artifact(bytes, path.string());
}

}  // namespace mva
