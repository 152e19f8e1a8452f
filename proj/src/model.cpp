#include "resnls/model.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "resnls/errors.hpp"

namespace resnls {

namespace {

constexpr char kMagic[] = "RESNLS-MODEL";
constexpr char kMagicV1[] = "RESNLS-MODEL v1";

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_update(std::uint64_t& hash, const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        hash ^= p[i];
        hash *= kFnvPrime;
    }
}

// Little-endian byte composition is done with shifts, so it is correct on
// any host byte order.
void put_le(std::string& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
}

double get_le(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i]))
                << (8 * i);
    }
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::string hex_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

std::string hex_u64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

double parse_hex_double(const std::string& s, const std::string& field) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty()) {
        throw SerializationError("model header field '" + field +
                                 "' is not a number: '" + s + "'");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& field) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || s.empty()) {
        throw SerializationError("model header field '" + field +
                                 "' is not an integer: '" + s + "'");
    }
    return v;
}

}  // namespace

Architecture architecture_from_name(const std::string& name) {
    if (name == "resnls") return Architecture::kResnls;
    if (name == "cnn") return Architecture::kCnn;
    if (name == "rnn") return Architecture::kRnn;
    if (name == "lstm") return Architecture::kLstm;
    if (name == "bilstm") return Architecture::kBilstm;
    throw ConfigError("unknown architecture '" + name +
                      "' (expected resnls, cnn, rnn, lstm or bilstm)");
}

std::string architecture_name(Architecture arch) {
    switch (arch) {
        case Architecture::kResnls: return "resnls";
        case Architecture::kCnn: return "cnn";
        case Architecture::kRnn: return "rnn";
        case Architecture::kLstm: return "lstm";
        case Architecture::kBilstm: return "bilstm";
    }
    throw ContractError("unknown architecture value");
}

void ModelSpec::validate() const {
    if (window_n < 1) {
        throw ConfigError("window_n must be positive");
    }
    if (kernel_size % 2 == 0) {
        throw ConfigError("kernel_size must be odd, got " +
                          std::to_string(kernel_size));
    }
    const bool conv_arch = architecture == Architecture::kResnls ||
                           architecture == Architecture::kCnn;
    if (conv_arch) {
        if (conv_filters < 1) {
            throw ConfigError("conv_filters must be at least 1");
        }
        if (window_n < kernel_size) {
            throw ConfigError("window_n (" + std::to_string(window_n) +
                              ") must be at least kernel_size (" +
                              std::to_string(kernel_size) + ")");
        }
    }
    if (architecture != Architecture::kCnn && lstm_hidden < 1) {
        throw ConfigError("lstm_hidden must be at least 1");
    }
    if (dropout_keep <= 0.0 || dropout_keep > 1.0) {
        throw ConfigError("dropout_keep must be in (0, 1], got " +
                          std::to_string(dropout_keep));
    }
}

Model Model::build(const ModelSpec& spec) {
    spec.validate();
    Model m;
    m.spec_ = spec;
    DetRng rng(spec.init_seed);
    const std::size_t n = spec.window_n;
    const std::size_t filters = spec.conv_filters;
    const std::size_t k = spec.kernel_size;
    const std::size_t pad = (k - 1) / 2;
    const std::size_t hidden = spec.lstm_hidden;

    auto reg = [&m](std::string name, const TensorPtr& t, bool trainable = true,
                    bool decay = false) {
        m.params_.push_back({std::move(name), t, trainable, decay});
    };
    auto reg_linear = [&](const std::string& prefix, const LinearLayer& l) {
        reg(prefix + ".weight", l.weight);
        reg(prefix + ".bias", l.bias);
    };
    auto reg_bn = [&](const std::string& prefix, const BatchNorm1DLayer& l) {
        reg(prefix + ".gamma", l.gamma);
        reg(prefix + ".beta", l.beta);
        reg(prefix + ".running_mean", l.running_mean, false);
        reg(prefix + ".running_var", l.running_var, false);
    };
    auto reg_lstm = [&](const std::string& prefix, const LstmCell& c) {
        reg(prefix + ".w_ii", c.w_ii);
        reg(prefix + ".w_if", c.w_if);
        reg(prefix + ".w_ig", c.w_ig);
        reg(prefix + ".w_io", c.w_io);
        reg(prefix + ".w_hi", c.w_hi);
        reg(prefix + ".w_hf", c.w_hf);
        reg(prefix + ".w_hg", c.w_hg);
        reg(prefix + ".w_ho", c.w_ho);
        reg(prefix + ".b_i", c.b_i);
        reg(prefix + ".b_f", c.b_f);
        reg(prefix + ".b_g", c.b_g);
        reg(prefix + ".b_o", c.b_o);
    };

    const bool conv_arch = spec.architecture == Architecture::kResnls ||
                           spec.architecture == Architecture::kCnn;
    if (conv_arch) {
        m.conv1_ = Conv1DLayer::create(filters, 1, k, pad, rng);
        m.conv2_ = Conv1DLayer::create(filters, filters, k, pad, rng);
        reg("conv1.kernels", m.conv1_.kernels, true, true);
        reg("conv1.bias", m.conv1_.bias);
        reg("conv2.kernels", m.conv2_.kernels, true, true);
        reg("conv2.bias", m.conv2_.bias);
        m.bn1_ = BatchNorm1DLayer::create(filters);
        reg_bn("bn1", m.bn1_);
        if (spec.bn_after_each_conv) {
            m.bn2_ = BatchNorm1DLayer::create(filters);
            reg_bn("bn2", m.bn2_);
        }
        m.dropout_ = DropoutLayer::create(spec.dropout_keep, rng.next_u64());
        m.proj_ = LinearLayer::create(n, filters * n, rng);
        reg_linear("proj", m.proj_);
    }
    switch (spec.architecture) {
        case Architecture::kResnls:
            m.lstm_ = LstmCell::create(hidden, 1, rng);
            reg_lstm("lstm", m.lstm_);
            m.head_ = LinearLayer::create(1, hidden, rng);
            break;
        case Architecture::kCnn:
            m.head_ = LinearLayer::create(1, n, rng);
            break;
        case Architecture::kRnn:
            m.rnn_ = RnnCell::create(hidden, 1, rng);
            reg("rnn.w_ih", m.rnn_.w_ih);
            reg("rnn.w_hh", m.rnn_.w_hh);
            reg("rnn.b", m.rnn_.b);
            m.head_ = LinearLayer::create(1, hidden, rng);
            break;
        case Architecture::kLstm:
            m.lstm_ = LstmCell::create(hidden, 1, rng);
            reg_lstm("lstm", m.lstm_);
            m.head_ = LinearLayer::create(1, hidden, rng);
            break;
        case Architecture::kBilstm:
            m.lstm_ = LstmCell::create(hidden, 1, rng);
            reg_lstm("lstm_fwd", m.lstm_);
            m.lstm_bwd_ = LstmCell::create(hidden, 1, rng);
            reg_lstm("lstm_bwd", m.lstm_bwd_);
            m.head_ = LinearLayer::create(1, 2 * hidden, rng);
            break;
    }
    reg_linear("head", m.head_);
    return m;
}

const Param& Model::param(const std::string& name) const {
    for (const Param& p : params_) {
        if (p.name == name) return p;
    }
    throw ContractError("model has no parameter named '" + name + "'");
}

TensorPtr Model::conv_branch(Tape& tape, const TensorPtr& x, Mode mode) {
    const std::size_t batch = x->dim(0);
    const std::size_t n = spec_.window_n;
    auto h = tape.reshape(x, {batch, 1, n});
    auto c1 = tape.relu(conv1_.forward(tape, h));
    if (spec_.bn_after_each_conv) c1 = bn1_.forward(tape, c1, mode);
    auto c2 = tape.relu(conv2_.forward(tape, c1));
    auto post = spec_.bn_after_each_conv ? bn2_.forward(tape, c2, mode)
                                         : bn1_.forward(tape, c2, mode);
    auto dropped = dropout_.forward(tape, post, mode);
    auto flat = tape.reshape(dropped, {batch, spec_.conv_filters * n});
    return proj_.forward(tape, flat);
}

TensorPtr Model::forward(Tape& tape, const TensorPtr& x, Mode mode) {
    if (x->rank() != 2 || x->dim(1) != spec_.window_n) {
        throw DimensionError("model expects [batch x " +
                             std::to_string(spec_.window_n) + "] input, got " +
                             shape_str(x->shape()));
    }
    const std::size_t batch = x->dim(0);
    const std::size_t n = spec_.window_n;
    switch (spec_.architecture) {
        case Architecture::kResnls: {
            auto residual = conv_branch(tape, x, mode);
            auto z = tape.add(x, residual);
            auto seq = tape.reshape(z, {batch, n, 1});
            return head_.forward(tape, lstm_.sequence(tape, seq).last_h);
        }
        case Architecture::kCnn: {
            return head_.forward(tape, conv_branch(tape, x, mode));
        }
        case Architecture::kRnn: {
            auto seq = tape.reshape(x, {batch, n, 1});
            return head_.forward(tape, rnn_.last_hidden(tape, seq));
        }
        case Architecture::kLstm: {
            auto seq = tape.reshape(x, {batch, n, 1});
            return head_.forward(tape, lstm_.sequence(tape, seq).last_h);
        }
        case Architecture::kBilstm: {
            auto seq = tape.reshape(x, {batch, n, 1});
            auto fwd = lstm_.sequence(tape, seq, false).last_h;
            auto bwd = lstm_bwd_.sequence(tape, seq, true).last_h;
            return head_.forward(tape, tape.concat(fwd, bwd));
        }
    }
    throw ContractError("unknown architecture value");
}

TensorPtr Model::predict(const TensorPtr& inputs, std::size_t chunk) {
    if (inputs->rank() != 2 || inputs->dim(1) != spec_.window_n) {
        throw DimensionError("predict expects [rows x " +
                             std::to_string(spec_.window_n) + "] input, got " +
                             shape_str(inputs->shape()));
    }
    if (chunk < 1) {
        throw ContractError("predict chunk size must be positive");
    }
    const std::size_t rows = inputs->dim(0);
    const std::size_t n = spec_.window_n;
    auto out = tensor({rows, 1});
    for (std::size_t start = 0; start < rows; start += chunk) {
        const std::size_t count = std::min(chunk, rows - start);
        auto x = tensor({count, n});
        std::copy(inputs->data().begin() + static_cast<long>(start * n),
                  inputs->data().begin() + static_cast<long>((start + count) * n),
                  x->data().begin());
        Tape tape(false);
        auto y = forward(tape, x, Mode::kEval);
        for (std::size_t i = 0; i < count; ++i) {
            out->at(start + i, 0) = y->at(i, 0);
        }
    }
    return out;
}

std::uint64_t Model::parameter_checksum() const {
    std::string blob;
    for (const Param& p : params_) {
        for (double v : p.tensor->data()) put_le(blob, v);
    }
    std::uint64_t hash = kFnvOffset;
    fnv_update(hash, blob.data(), blob.size());
    return hash;
}

void Model::save(const std::string& path) const {
    std::string blob;
    for (const Param& p : params_) {
        for (double v : p.tensor->data()) put_le(blob, v);
    }
    std::uint64_t hash = kFnvOffset;
    fnv_update(hash, blob.data(), blob.size());

    std::string header = std::string(kMagicV1) + "\n";
    auto kv = [&header](const std::string& key, const std::string& value) {
        header += key;
        header += '=';
        header += value;
        header += '\n';
    };
    kv("architecture", architecture_name(spec_.architecture));
    kv("window_n", std::to_string(spec_.window_n));
    kv("conv_filters", std::to_string(spec_.conv_filters));
    kv("kernel_size", std::to_string(spec_.kernel_size));
    kv("lstm_hidden", std::to_string(spec_.lstm_hidden));
    kv("dropout_keep", hex_double(spec_.dropout_keep));
    kv("bn_after_each_conv", spec_.bn_after_each_conv ? "1" : "0");
    kv("init_seed", std::to_string(spec_.init_seed));
    kv("norm_min", hex_double(normalizer.min));
    kv("norm_max", hex_double(normalizer.max));
    kv("norm_first", normalizer.fitted_first.str());
    kv("norm_last", normalizer.fitted_last.str());
    kv("fp_shuffle_seed", std::to_string(fingerprint.shuffle_seed));
    kv("fp_epochs", std::to_string(fingerprint.epochs));
    kv("fp_final_train_mse", hex_double(fingerprint.final_train_mse));
    kv("fp_final_test_mse", hex_double(fingerprint.final_test_mse));
    kv("param_count", std::to_string(params_.size()));
    std::size_t offset = 0;
    for (const Param& p : params_) {
        std::string shape;
        for (std::size_t i = 0; i < p.tensor->rank(); ++i) {
            if (i) shape += ',';
            shape += std::to_string(p.tensor->dim(i));
        }
        kv("param", p.name + "|" + shape + "|" + std::to_string(offset));
        offset += p.tensor->size() * sizeof(double);
    }
    kv("blob_bytes", std::to_string(blob.size()));
    kv("checksum", hex_u64(hash));
    header += "END-HEADER\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw SerializationError("cannot write model file '" + path + "'");
    }
    out.write(header.data(), static_cast<long>(header.size()));
    out.write(blob.data(), static_cast<long>(blob.size()));
    if (!out) {
        throw SerializationError("write failed for model file '" + path + "'");
    }
}

Model Model::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SerializationError("cannot open model file '" + path + "'");
    }
    std::string content{std::istreambuf_iterator<char>(in),
                        std::istreambuf_iterator<char>()};

    const std::size_t first_eol = content.find('\n');
    const std::string first =
        first_eol == std::string::npos ? content : content.substr(0, first_eol);
    if (first.rfind(kMagic, 0) != 0) {
        throw VersionError("'" + path + "' is not a model file");
    }
    if (first != kMagicV1) {
        throw VersionError("unsupported model format '" + first +
                           "'; this build reads '" + kMagicV1 + "'");
    }

    struct ManifestEntry {
        std::string name;
        std::vector<std::size_t> shape;
        std::size_t offset = 0;
    };
    std::map<std::string, std::string> kv;
    std::vector<ManifestEntry> manifest;
    std::size_t pos = first_eol + 1;
    std::size_t blob_start = std::string::npos;
    while (true) {
        const std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) {
            throw TruncatedError("model header of '" + path +
                                 "' ends before END-HEADER");
        }
        const std::string line = content.substr(pos, eol - pos);
        pos = eol + 1;
        if (line == "END-HEADER") {
            blob_start = pos;
            break;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw SerializationError("malformed model header line '" + line +
                                     "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "param") {
            const std::size_t p1 = value.find('|');
            const std::size_t p2 = value.rfind('|');
            if (p1 == std::string::npos || p2 == p1) {
                throw SerializationError("malformed parameter entry '" + value +
                                         "'");
            }
            ManifestEntry entry;
            entry.name = value.substr(0, p1);
            std::string dims = value.substr(p1 + 1, p2 - p1 - 1);
            std::string cur;
            for (char c : dims + ",") {
                if (c == ',') {
                    entry.shape.push_back(parse_u64(cur, "param shape"));
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            entry.offset = parse_u64(value.substr(p2 + 1), "param offset");
            manifest.push_back(std::move(entry));
        } else {
            kv[key] = value;
        }
    }

    auto need = [&kv, &path](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw SerializationError("model file '" + path +
                                     "' is missing header field '" + key + "'");
        }
        return it->second;
    };

    ModelSpec spec;
    try {
        spec.architecture = architecture_from_name(need("architecture"));
        spec.window_n = parse_u64(need("window_n"), "window_n");
        spec.conv_filters = parse_u64(need("conv_filters"), "conv_filters");
        spec.kernel_size = parse_u64(need("kernel_size"), "kernel_size");
        spec.lstm_hidden = parse_u64(need("lstm_hidden"), "lstm_hidden");
        spec.dropout_keep = parse_hex_double(need("dropout_keep"), "dropout_keep");
        spec.bn_after_each_conv = need("bn_after_each_conv") == "1";
        spec.init_seed = parse_u64(need("init_seed"), "init_seed");
        spec.validate();
    } catch (const ConfigError& e) {
        throw SerializationError("model file '" + path +
                                 "' carries an invalid spec: " + e.what());
    }

    const std::size_t blob_bytes = parse_u64(need("blob_bytes"), "blob_bytes");
    const std::size_t have = content.size() - blob_start;
    if (have < blob_bytes) {
        throw TruncatedError("model blob of '" + path + "' is truncated: need " +
                             std::to_string(blob_bytes) + " bytes, have " +
                             std::to_string(have));
    }
    if (have > blob_bytes) {
        throw SerializationError("model file '" + path + "' has " +
                                 std::to_string(have - blob_bytes) +
                                 " trailing bytes");
    }
    std::uint64_t hash = kFnvOffset;
    fnv_update(hash, content.data() + blob_start, blob_bytes);
    const std::string stored = need("checksum");
    if (hex_u64(hash) != stored) {
        throw ChecksumError("model checksum mismatch for '" + path +
                            "': header says " + stored + ", blob hashes to " +
                            hex_u64(hash));
    }

    Model m = build(spec);
    if (manifest.size() != m.params_.size() ||
        parse_u64(need("param_count"), "param_count") != m.params_.size()) {
        throw SerializationError(
            "model file '" + path + "' lists " +
            std::to_string(manifest.size()) + " parameters; schema expects " +
            std::to_string(m.params_.size()));
    }
    std::size_t expect_offset = 0;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const ManifestEntry& entry = manifest[i];
        Param& p = m.params_[i];
        if (entry.name != p.name || entry.shape != p.tensor->shape() ||
            entry.offset != expect_offset) {
            throw SerializationError("parameter " + std::to_string(i) +
                                     " of '" + path + "' ('" + entry.name +
                                     "') does not match the schema entry '" +
                                     p.name + "'");
        }
        const char* src = content.data() + blob_start + entry.offset;
        for (std::size_t j = 0; j < p.tensor->size(); ++j) {
            p.tensor->at(j) = get_le(src + j * sizeof(double));
        }
        expect_offset += p.tensor->size() * sizeof(double);
    }
    if (expect_offset != blob_bytes) {
        throw SerializationError("model blob of '" + path + "' holds " +
                                 std::to_string(blob_bytes) +
                                 " bytes; schema expects " +
                                 std::to_string(expect_offset));
    }

    Normalizer norm;
    norm.min = parse_hex_double(need("norm_min"), "norm_min");
    norm.max = parse_hex_double(need("norm_max"), "norm_max");
    try {
        norm.fitted_first = Date::parse(need("norm_first"));
        norm.fitted_last = Date::parse(need("norm_last"));
    } catch (const DataError& e) {
        throw SerializationError("model file '" + path + "': " + e.what());
    }
    m.normalizer = norm;
    m.fingerprint.shuffle_seed =
        parse_u64(need("fp_shuffle_seed"), "fp_shuffle_seed");
    m.fingerprint.epochs = parse_u64(need("fp_epochs"), "fp_epochs");
    m.fingerprint.final_train_mse =
        parse_hex_double(need("fp_final_train_mse"), "fp_final_train_mse");
    m.fingerprint.final_test_mse =
        parse_hex_double(need("fp_final_test_mse"), "fp_final_test_mse");
    return m;
}

}  // namespace resnls
