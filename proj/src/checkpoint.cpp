#include "nusr/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace nusr {

namespace {

constexpr char kMagic[4] = {'N', 'U', 'S', 'R'};
constexpr std::uint16_t kVersion = 1;

// ---- encoding ----

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_bytes(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    put_bytes(out, s.data(), s.size());
}

void put_tensor_table(std::vector<std::uint8_t>& out,
                      const std::vector<std::pair<std::string, Tensor>>& table) {
    put_u32(out, static_cast<std::uint32_t>(table.size()));
    for (const auto& [name, t] : table) {
        put_string(out, name);
        put_u8(out, static_cast<std::uint8_t>(t.ndim()));
        for (std::size_t d = 0; d < t.ndim(); ++d) {
            put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
        }
        const auto data = t.data();
        for (scalar v : data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    }
}

// ---- decoding ----

struct Cursor {
    const std::uint8_t* p;
    std::size_t size;
    std::size_t off = 0;

    void need(std::size_t n, const char* what) const {
        if (off + n > size) {
            throw FormatError(std::string("checkpoint truncated while reading ") + what, off);
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return p[off++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(p[off] | (p[off + 1] << 8));
        off += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    std::string string(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(p + off), n);
        off += n;
        return s;
    }
};

std::vector<std::pair<std::string, Tensor>> read_tensor_table(Cursor& cur, const char* what) {
    const std::uint32_t count = cur.u32(what);
    std::vector<std::pair<std::string, Tensor>> table;
    table.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = cur.string("tensor name");
        const std::uint8_t ndim = cur.u8("tensor rank");
        if (ndim == 0 || ndim > 8) {
            throw FormatError("tensor '" + name + "' has invalid rank " + std::to_string(ndim),
                              cur.off - 1);
        }
        Shape shape(ndim);
        std::int64_t n = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const std::uint32_t dim = cur.u32("tensor dim");
            if (dim == 0) {
                throw FormatError("tensor '" + name + "' has a zero dimension", cur.off - 4);
            }
            shape[d] = static_cast<std::int64_t>(dim);
            n *= shape[d];
        }
        cur.need(static_cast<std::size_t>(n) * 4, "tensor payload");
        std::vector<scalar> data(static_cast<std::size_t>(n));
        for (std::int64_t e = 0; e < n; ++e) {
            const std::uint32_t bits = cur.u32("tensor payload");
            float f;
            std::memcpy(&f, &bits, 4);
            data[static_cast<std::size_t>(e)] = static_cast<scalar>(f);
        }
        table.emplace_back(std::move(name), Tensor::from_data(shape, data));
    }
    return table;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Strict numeric parsing for config-block values, which this module itself
// wrote; failures indicate file corruption that slipped past the layout reads.
double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw FormatError("checkpoint config key '" + key + "' has non-numeric value '" + v + "'",
                          0);
    }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw FormatError("checkpoint config key '" + key + "' has non-integer value '" + v + "'",
                          0);
    }
}

const std::string& require_key(const std::map<std::string, std::string>& cfg,
                               const std::string& key) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) {
        throw FormatError("checkpoint config is missing key '" + key + "'", 0);
    }
    return it->second;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out;
    put_bytes(out, kMagic, 4);
    put_u16(out, ckpt.version);

    std::string config_text;
    for (const auto& [k, v] : ckpt.config) {
        if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
            v.find('\n') != std::string::npos) {
            throw UsageError("checkpoint config key/value may not contain '=' or newlines: '" + k +
                             "'");
        }
        config_text += k;
        config_text += '=';
        config_text += v;
        config_text += '\n';
    }
    put_string(out, config_text);

    put_tensor_table(out, ckpt.tensors);
    put_tensor_table(out, ckpt.optimizer);
    put_u64(out, ckpt.step);
    put_string(out, ckpt.rng_state);

    const auto crc =
        static_cast<std::uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size())));
    put_u32(out, crc);
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("bad checkpoint magic (expected \"NUSR\")", 0);
    }
    if (bytes.size() < 4 + 2 + 4) {
        throw FormatError("checkpoint truncated before version/config", bytes.size());
    }
    // Verify the trailing checksum before trusting any field beyond the magic.
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
    const auto computed =
        static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
    if (stored != computed) {
        throw FormatError("checkpoint checksum mismatch: file is corrupt", body);
    }

    Cursor cur{bytes.data(), body};
    cur.off = 4;
    Checkpoint ckpt;
    ckpt.version = cur.u16("version");
    if (ckpt.version != kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version),
                          cur.off - 2);
    }
    const std::string config_text = cur.string("config block");
    std::size_t line_start = 0;
    while (line_start < config_text.size()) {
        std::size_t nl = config_text.find('\n', line_start);
        if (nl == std::string::npos) nl = config_text.size();
        const std::string line = config_text.substr(line_start, nl - line_start);
        line_start = nl + 1;
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("checkpoint config line lacks '=': '" + line + "'", cur.off);
        }
        ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
    }

    ckpt.tensors = read_tensor_table(cur, "tensor table");
    ckpt.optimizer = read_tensor_table(cur, "optimizer table");
    ckpt.step = cur.u64("step");
    ckpt.rng_state = cur.string("rng state");
    if (cur.off != body) {
        throw FormatError("checkpoint has " + std::to_string(body - cur.off) +
                              " unexpected trailing bytes",
                          cur.off);
    }
    return ckpt;
}

void write_checkpoint_file(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ckpt);
    // Write-then-rename so an interrupted save never leaves a half-written
    // file under the final name.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open checkpoint file for writing: " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("short write to checkpoint file: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot move checkpoint into place at " + path.string() + ": " +
                      ec.message());
    }
}

Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint file: " + path.string());
    }
    in.seekg(0, std::ios::end);
    const std::streamsize size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0) {
        in.read(reinterpret_cast<char*>(bytes.data()), size);
    }
    if (!in) {
        throw IoError("failed reading checkpoint file: " + path.string());
    }
    return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const UNetPPModel& model, const TrainState& state,
                           const TrainConfig& train_cfg) {
    Checkpoint ckpt;
    const UNetPPConfig& mc = model.config;

    std::string channels;
    for (std::size_t i = 0; i < mc.channels.size(); ++i) {
        if (i) channels += ',';
        channels += std::to_string(mc.channels[i]);
    }
    ckpt.config["model.levels"] = std::to_string(mc.levels);
    ckpt.config["model.channels"] = channels;
    ckpt.config["model.in_channels"] = std::to_string(mc.in_channels);
    ckpt.config["model.out_channels"] = std::to_string(mc.out_channels);
    ckpt.config["model.nested"] = mc.nested ? "true" : "false";

    ckpt.config["train.loss"] = to_string(train_cfg.loss);
    ckpt.config["train.learning_rate"] = format_double(train_cfg.learning_rate);
    ckpt.config["train.weight_decay"] = format_double(train_cfg.weight_decay);
    ckpt.config["train.adam_beta1"] = format_double(train_cfg.adam_beta1);
    ckpt.config["train.adam_beta2"] = format_double(train_cfg.adam_beta2);
    ckpt.config["train.adam_eps"] = format_double(train_cfg.adam_eps);
    ckpt.config["train.steps"] = std::to_string(train_cfg.steps);
    ckpt.config["train.seed"] = std::to_string(train_cfg.seed);
    ckpt.config["train.nlmse_epsilon"] = format_double(train_cfg.nlmse_epsilon);
    ckpt.config["train.checkpoint_every"] = std::to_string(train_cfg.checkpoint_every);
    ckpt.config["train.val_every"] = std::to_string(train_cfg.val_every);
    ckpt.config["train.norm_lo"] = format_double(train_cfg.norm_lo);
    ckpt.config["train.norm_hi"] = format_double(train_cfg.norm_hi);

    ckpt.config["state.adam_t"] = std::to_string(state.adam.t);
    ckpt.config["state.best_val_psnr"] = format_double(state.best_val_psnr);

    // parameters() hands out live views; copy so the checkpoint is a snapshot.
    for (const auto& [name, p] : model.parameters()) {
        ckpt.tensors.emplace_back(
            name, Tensor::from_data(p.shape(), std::vector<scalar>(p.data().begin(),
                                                                   p.data().end())));
    }
    if (state.adam.initialized()) {
        if (state.adam.m.size() != ckpt.tensors.size()) {
            throw UsageError("checkpoint: optimizer state does not match the parameter list");
        }
        for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
            const auto& [name, p] = ckpt.tensors[i];
            ckpt.optimizer.emplace_back(name + ".m",
                                        Tensor::from_data(p.shape(), state.adam.m[i]));
            ckpt.optimizer.emplace_back(name + ".v",
                                        Tensor::from_data(p.shape(), state.adam.v[i]));
        }
    }
    ckpt.step = static_cast<std::uint64_t>(state.step);

    std::ostringstream rng_text;
    rng_text << state.rng;
    ckpt.rng_state = rng_text.str();
    return ckpt;
}

LoadedRun restore_run(const Checkpoint& ckpt) {
    UNetPPConfig mc;
    mc.levels = parse_int("model.levels", require_key(ckpt.config, "model.levels"));
    mc.channels.clear();
    {
        const std::string& list = require_key(ckpt.config, "model.channels");
        std::size_t start = 0;
        while (start <= list.size()) {
            std::size_t comma = list.find(',', start);
            if (comma == std::string::npos) comma = list.size();
            mc.channels.push_back(
                parse_int("model.channels", list.substr(start, comma - start)));
            start = comma + 1;
        }
    }
    mc.in_channels = parse_int("model.in_channels", require_key(ckpt.config, "model.in_channels"));
    mc.out_channels =
        parse_int("model.out_channels", require_key(ckpt.config, "model.out_channels"));
    mc.nested = require_key(ckpt.config, "model.nested") == "true";
    mc.validate();

    LoadedRun run{UNetPPModel::create(mc, 0), TrainState{}, TrainConfig{}};

    TrainConfig& tc = run.train_cfg;
    tc.loss = loss_kind_from_string(require_key(ckpt.config, "train.loss"));
    tc.learning_rate = parse_double("train.learning_rate",
                                    require_key(ckpt.config, "train.learning_rate"));
    tc.weight_decay =
        parse_double("train.weight_decay", require_key(ckpt.config, "train.weight_decay"));
    tc.adam_beta1 = parse_double("train.adam_beta1", require_key(ckpt.config, "train.adam_beta1"));
    tc.adam_beta2 = parse_double("train.adam_beta2", require_key(ckpt.config, "train.adam_beta2"));
    tc.adam_eps = parse_double("train.adam_eps", require_key(ckpt.config, "train.adam_eps"));
    tc.steps = parse_int("train.steps", require_key(ckpt.config, "train.steps"));
    tc.seed = static_cast<std::uint64_t>(
        parse_int("train.seed", require_key(ckpt.config, "train.seed")));
    tc.nlmse_epsilon =
        parse_double("train.nlmse_epsilon", require_key(ckpt.config, "train.nlmse_epsilon"));
    tc.checkpoint_every =
        parse_int("train.checkpoint_every", require_key(ckpt.config, "train.checkpoint_every"));
    tc.val_every = parse_int("train.val_every", require_key(ckpt.config, "train.val_every"));
    tc.norm_lo = parse_double("train.norm_lo", require_key(ckpt.config, "train.norm_lo"));
    tc.norm_hi = parse_double("train.norm_hi", require_key(ckpt.config, "train.norm_hi"));

    auto params = run.model.parameters();
    if (params.size() != ckpt.tensors.size()) {
        throw FormatError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                              " tensors but the configured model has " +
                              std::to_string(params.size()) + " parameters",
                          0);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [want_name, p] = params[i];
        const auto& [got_name, saved] = ckpt.tensors[i];
        if (want_name != got_name) {
            throw FormatError("checkpoint tensor " + std::to_string(i) + " is named '" + got_name +
                                  "', expected '" + want_name + "'",
                              0);
        }
        if (saved.shape() != p.shape()) {
            throw FormatError("checkpoint tensor '" + got_name + "' has shape " +
                                  shape_str(saved.shape()) + ", expected " + shape_str(p.shape()),
                              0);
        }
        const auto src = saved.data();
        auto dst = p.data_mut();
        std::copy(src.begin(), src.end(), dst.begin());
    }

    TrainState& st = run.state;
    st.step = static_cast<std::int64_t>(ckpt.step);
    st.best_val_psnr =
        parse_double("state.best_val_psnr", require_key(ckpt.config, "state.best_val_psnr"));
    if (!ckpt.optimizer.empty()) {
        if (ckpt.optimizer.size() != 2 * params.size()) {
            throw FormatError("optimizer table holds " + std::to_string(ckpt.optimizer.size()) +
                                  " entries, expected " + std::to_string(2 * params.size()),
                              0);
        }
        st.adam.m.resize(params.size());
        st.adam.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& [m_name, m_t] = ckpt.optimizer[2 * i];
            const auto& [v_name, v_t] = ckpt.optimizer[2 * i + 1];
            const std::string& base = params[i].first;
            if (m_name != base + ".m" || v_name != base + ".v") {
                throw FormatError("optimizer entries for parameter '" + base +
                                      "' are missing or out of order",
                                  0);
            }
            if (m_t.shape() != params[i].second.shape() ||
                v_t.shape() != params[i].second.shape()) {
                throw FormatError("optimizer moments for '" + base + "' have the wrong shape", 0);
            }
            st.adam.m[i].assign(m_t.data().begin(), m_t.data().end());
            st.adam.v[i].assign(v_t.data().begin(), v_t.data().end());
        }
        st.adam.t = parse_int("state.adam_t", require_key(ckpt.config, "state.adam_t"));
    }
    if (!ckpt.rng_state.empty()) {
        std::istringstream rng_text(ckpt.rng_state);
        rng_text >> st.rng;
        if (rng_text.fail()) {
            throw FormatError("checkpoint rng state failed to parse", 0);
        }
    }
    return run;
}

void save_checkpoint(const UNetPPModel& model, const TrainState& state,
                     const TrainConfig& train_cfg, const std::filesystem::path& path) {
    write_checkpoint_file(make_checkpoint(model, state, train_cfg), path);
}

LoadedRun load_checkpoint(const std::filesystem::path& path) {
    return restore_run(read_checkpoint_file(path));
}

}  // namespace nusr
