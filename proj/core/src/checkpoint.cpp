#include "groupforge/checkpoint.hpp"

#include "groupforge/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace groupforge {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

std::string key_hex(std::uint64_t key) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << key;
    return os.str();
}

std::uint64_t key_from_hex(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

}  // namespace

void save_policy(const PolicyModel& p, const std::filesystem::path& path) {
    json j;
    j["version"] = kCheckpointVersion;
    j["kind"] = p.kind == PolicyKind::Tabular ? "tabular" : "mlp";
    j["max_response_len"] = p.max_response_len;
    j["dims"] = {{"context", p.dims.context},
                 {"embed", p.dims.embed},
                 {"hidden", p.dims.hidden}};
    json vocab = json::array();
    for (int v = 0; v < p.vocab().size(); ++v) vocab.push_back(p.vocab().token_text(v));
    j["vocab"] = vocab;

    std::vector<std::uint64_t> keys;
    keys.reserve(p.table.size());
    for (const auto& [key, row] : p.table) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    json table = json::array();
    for (std::uint64_t key : keys) {
        table.push_back({{"k", key_hex(key)}, {"v", p.table.at(key)}});
    }
    j["table"] = std::move(table);

    j["params"] = {{"embed", p.embed}, {"w1", p.w1}, {"b1", p.b1},
                   {"w2", p.w2},       {"b2", p.b2}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot open checkpoint for writing: " + path.string());
    out << j.dump() << "\n";
    if (!out) throw DatasetError("checkpoint write failed: " + path.string());
}

PolicyModel load_policy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open checkpoint: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DatasetError("malformed checkpoint " + path.string() + ": " + e.what());
    }

    try {
        if (j.at("version").get<int>() != kCheckpointVersion) {
            throw DatasetError("unsupported checkpoint version in " + path.string());
        }
        PolicyModel p;
        std::string kind = j.at("kind").get<std::string>();
        p.kind = kind == "tabular" ? PolicyKind::Tabular : PolicyKind::Mlp;
        if (kind != "tabular" && kind != "mlp") {
            throw DatasetError("unknown policy kind: " + kind);
        }
        p.max_response_len = j.at("max_response_len").get<int>();
        p.dims.context = j.at("dims").at("context").get<int>();
        p.dims.embed = j.at("dims").at("embed").get<int>();
        p.dims.hidden = j.at("dims").at("hidden").get<int>();

        auto vocab = j.at("vocab").get<std::vector<std::string>>();
        if (static_cast<int>(vocab.size()) != p.vocab().size()) {
            throw DatasetError("checkpoint vocabulary does not match this build");
        }
        for (int v = 0; v < p.vocab().size(); ++v) {
            if (vocab[static_cast<std::size_t>(v)] != p.vocab().token_text(v)) {
                throw DatasetError("checkpoint vocabulary does not match this build");
            }
        }

        for (const json& entry : j.at("table")) {
            std::uint64_t key = key_from_hex(entry.at("k").get<std::string>());
            p.table[key] = entry.at("v").get<std::vector<double>>();
        }
        const json& params = j.at("params");
        p.embed = params.at("embed").get<std::vector<double>>();
        p.w1 = params.at("w1").get<std::vector<double>>();
        p.b1 = params.at("b1").get<std::vector<double>>();
        p.w2 = params.at("w2").get<std::vector<double>>();
        p.b2 = params.at("b2").get<std::vector<double>>();
        return p;
    } catch (const json::exception& e) {
        throw DatasetError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace groupforge
