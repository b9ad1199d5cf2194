#include "panoseg/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "panoseg/ptns.hpp"

namespace panoseg {

void EquirectSample::validate(std::size_t num_classes) const {
    const std::size_t h = labels.height, w = labels.width;
    if (h == 0 || w != 2 * h) throw std::invalid_argument("sample " + id + ": width must be twice the height");
    auto check = [&](const nn::Tensor& t, nn::Shape want, const char* what) {
        if (t.defined() && t.shape() != want) {
            throw std::invalid_argument("sample " + id + ": " + what + " has shape " + nn::to_string(t.shape()));
        }
    };
    if (!rgb.defined()) throw std::invalid_argument("sample " + id + ": missing rgb");
    check(rgb, {3, h, w}, "rgb");
    check(depth, {h, w}, "depth");
    check(normals, {3, h, w}, "normals");
    if (!instances.same_dims(labels)) throw std::invalid_argument("sample " + id + ": instance map dims differ");
    std::map<std::int32_t, std::int32_t> owner;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto l = labels.values[i];
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw std::invalid_argument("sample " + id + ": label out of range");
        const auto inst = instances.values[i];
        if (inst == 0) continue;
        const auto [it, fresh] = owner.emplace(inst, l);
        if (!fresh && it->second != l) throw std::invalid_argument("sample " + id + ": instance spans two classes");
    }
}

namespace data {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const Manifest& m) {
    return json{{"classes", m.classes},
                {"k", m.k},
                {"d_t", m.d_t},
                {"splits", {{"train", m.train}, {"val", m.val}}},
                {"height", m.height},
                {"width", m.width}};
}

Manifest manifest_from_json(const json& j) {
    try {
        static const std::set<std::string> known{"classes", "k", "d_t", "splits", "height", "width"};
        for (const auto& [key, v] : j.items()) {
            if (!known.contains(key)) throw DataError("manifest: unknown key '" + key + "'");
        }
        Manifest m;
        m.classes = j.at("classes").get<std::vector<std::string>>();
        m.k = j.at("k").get<std::size_t>();
        m.d_t = j.at("d_t").get<double>();
        m.train = j.at("splits").at("train").get<std::vector<std::string>>();
        m.val = j.at("splits").at("val").get<std::vector<std::string>>();
        m.height = j.value("height", std::size_t{0});
        m.width = j.value("width", std::size_t{0});
        if (m.classes.size() != m.k) throw DataError("manifest: class list length differs from k");
        if (!(m.d_t > 0)) throw DataError("manifest: d_t must be positive");
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
}

void write_manifest(const fs::path& dir, const Manifest& m) {
    const auto text = to_json(m).dump(2) + "\n";
    io::write_file_atomic(dir / "manifest.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

Manifest read_manifest(const fs::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw DataError("missing manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

void write_sample(const fs::path& dir, const EquirectSample& sample) {
    const auto final_dir = dir / sample.id;
    const auto tmp = dir / (sample.id + ".tmp");
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    io::write_tensor(tmp / "rgb.ptns", sample.rgb);
    if (sample.depth.defined()) io::write_tensor(tmp / "depth.ptns", sample.depth);
    if (sample.normals.defined()) io::write_tensor(tmp / "normals.ptns", sample.normals);
    io::write_tensor(tmp / "labels.ptns", sample.labels, io::DType::u8);
    io::write_tensor(tmp / "instances.ptns", sample.instances, io::DType::u16);
    fs::remove_all(final_dir);
    fs::rename(tmp, final_dir);
}

ReadOptions read_options_for(const std::vector<encoder::Modality>& modalities) {
    ReadOptions o;
    for (auto m : modalities) {
        o.need_depth |= m == encoder::Modality::depth;
        o.need_normals |= m == encoder::Modality::normals;
    }
    return o;
}

EquirectSample read_sample(const fs::path& dir, const std::string& id, const ReadOptions& opt) {
    const auto sdir = dir / id;
    auto path_of = [&](const char* name, bool required) -> std::optional<fs::path> {
        auto p = sdir / name;
        if (fs::exists(p)) return p;
        if (required) throw DataError("sample " + id + ": missing " + p.string());
        return std::nullopt;
    };
    EquirectSample s;
    s.id = id;
    try {
        s.rgb = io::read_tensor(*path_of("rgb.ptns", true));
        s.labels = io::read_grid(*path_of("labels.ptns", true));
        if (auto p = path_of("depth.ptns", opt.need_depth)) s.depth = io::read_tensor(*p);
        if (auto p = path_of("normals.ptns", opt.need_normals)) s.normals = io::read_tensor(*p);
        if (auto p = path_of("instances.ptns", false)) {
            s.instances = io::read_grid(*p);
        } else {
            s.instances = Grid<std::int32_t>(s.labels.height, s.labels.width);
        }
    } catch (const io::PtnsError& e) {
        throw DataError("sample " + id + ": " + e.what());
    }
    return s;
}

std::vector<EquirectSample> read_split(const fs::path& dir, const Manifest& m, const std::string& split,
                                       const ReadOptions& opt) {
    const std::vector<std::string>* ids = nullptr;
    if (split == "train") ids = &m.train;
    if (split == "val") ids = &m.val;
    if (!ids) throw DataError("unknown split '" + split + "'");
    std::vector<EquirectSample> out;
    for (const auto& id : *ids) {
        auto s = read_sample(dir, id, opt);
        if (m.height && (s.height() != m.height || s.width() != m.width)) {
            throw DataError("sample " + id + ": dims disagree with the manifest");
        }
        try {
            s.validate(m.k);
        } catch (const std::invalid_argument& e) {
            throw DataError(e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::string sample_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%04zu", index);
    return buf;
}

std::size_t train_count(std::size_t n) { return (3 * n + 3) / 4; }

Manifest generate_dataset(const fs::path& dir, const GenerateOptions& opt) {
    if (opt.samples == 0) throw std::invalid_argument("gen-data: need at least one sample");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create " + dir.string());

    Manifest m;
    m.classes = class_names();
    m.k = kNumClasses;
    m.height = opt.height;
    m.width = 2 * opt.height;
    const std::size_t n_train = train_count(opt.samples);
    std::vector<double> train_depths;
    for (std::size_t i = 0; i < opt.samples; ++i) {
        const auto spec = random_scene(sample_seed(opt.seed, i), opt.height, opt.scene);
        auto s = render_equirect(spec, opt.height, 2 * opt.height);
        s.id = sample_id(i);
        write_sample(dir, s);
        if (i < n_train) {
            m.train.push_back(s.id);
            // d_t is computed from the stored (f32) depths so it can be recomputed from disk.
            for (double d : s.depth.data()) train_depths.push_back(static_cast<double>(static_cast<float>(d)));
        } else {
            m.val.push_back(s.id);
        }
    }
    m.d_t = encoder::compute_d_t(train_depths);
    write_manifest(dir, m);
    return m;
}

void write_instance_masks(const fs::path& stem, const std::vector<refinement::InstanceMask>& masks) {
    if (masks.empty()) throw std::invalid_argument("instance masks: nothing to write");
    const std::size_t h = masks.front().mask.height, w = masks.front().mask.width;
    std::vector<double> planes;
    json meta = json::array();
    for (const auto& m : masks) {
        if (m.mask.height != h || m.mask.width != w) throw nn::ShapeError("instance masks: dims differ");
        planes.insert(planes.end(), m.mask.values.begin(), m.mask.values.end());
        meta.push_back({{"quality", m.quality},
                        {"modality", m.source_modality},
                        {"view", m.source_view == refinement::SourceView::original ? "original" : "shifted"}});
    }
    auto ptns = stem;
    ptns += ".ptns";
    io::write_raw(ptns, io::make_raw(io::DType::u8, {masks.size(), h, w}, planes));
    auto side = stem;
    side += ".json";
    const auto text = meta.dump(2) + "\n";
    io::write_file_atomic(side, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<refinement::InstanceMask> read_instance_masks(const fs::path& stem) {
    auto ptns = stem;
    ptns += ".ptns";
    auto side = stem;
    side += ".json";
    const auto raw = io::read_raw(ptns);
    if (raw.dims.size() != 3 || raw.dtype != io::DType::u8) throw DataError("instance masks: expected u8 [n,h,w]");
    std::ifstream in(side);
    if (!in) throw DataError("instance masks: missing " + side.string());
    const json meta = json::parse(in);
    if (meta.size() != raw.dims[0]) throw DataError("instance masks: quality list length differs from plane count");
    const std::size_t h = raw.dims[1], w = raw.dims[2];
    std::vector<refinement::InstanceMask> out;
    for (std::size_t n = 0; n < raw.dims[0]; ++n) {
        Mask m(h, w);
        for (std::size_t i = 0; i < h * w; ++i) m.values[i] = raw.payload[n * h * w + i] != 0;
        const auto& e = meta[n];
        out.push_back(refinement::make_instance(std::move(m), e.at("quality").get<double>(), e.at("modality").get<std::string>(),
                                                e.at("view").get<std::string>() == "shifted" ? refinement::SourceView::shifted
                                                                                            : refinement::SourceView::original));
    }
    return out;
}

}  // namespace data
}  // namespace panoseg
