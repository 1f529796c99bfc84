#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "led/errors.hpp"
#include "led/rng.hpp"
#include "led/scene.hpp"

namespace led {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t lineno, const std::string& why) {
    throw DataError(path + ":" + std::to_string(lineno) + ": " + why);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t c = line.find(',', pos);
        if (c == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, c - pos));
        pos = c + 1;
    }
    return out;
}

struct RawAgent {
    std::string role;
    std::vector<double> xs, ys;  // indexed by t
    std::vector<bool> seen;
};

}  // namespace

void write_scenes(const SceneSet& set, const std::string& path,
                  const std::vector<std::string>& headers) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open scene file for writing: " + path);
    for (const auto& h : headers) out << "# " << h << "\n";
    out << "# meta t_past=" << set.t_past << " t_future=" << set.t_future
        << " neighbors=" << set.n_neighbors << "\n";
    if (set.has_gen_meta) {
        out << "# meta gen_seed=" << set.gen_seed << " modes=" << set.gen_modes << " weights=";
        for (std::size_t i = 0; i < set.gen_weights.size(); ++i) {
            out << (i ? "," : "") << fmt17(set.gen_weights[i]);
        }
        out << "\n";
        for (const auto& s : set.scenes) {
            if (!s.has_mode_meta()) continue;
            out << "# scene " << s.id << " mode=" << s.mode_label << " refs=";
            for (int m = 0; m < s.mode_refs.dim(0); ++m) {
                out << (m ? ";" : "") << fmt17(s.mode_refs.at(m, 0)) << ":"
                    << fmt17(s.mode_refs.at(m, 1));
            }
            out << "\n";
        }
    }
    out << "scene_id,agent_id,role,t,x,y\n";
    for (const auto& s : set.scenes) {
        const int total = set.t_past + (s.has_future() ? set.t_future : 0);
        for (int t = 0; t < total; ++t) {
            const double x = t < set.t_past ? s.past.at(t, 0) : s.future.at(t - set.t_past, 0);
            const double y = t < set.t_past ? s.past.at(t, 1) : s.future.at(t - set.t_past, 1);
            out << s.id << ",0,ego," << t << "," << fmt17(x) << "," << fmt17(y) << "\n";
        }
        for (int j = 0; j < s.n_neighbors; ++j) {
            for (int t = 0; t < set.t_past; ++t) {
                out << s.id << "," << (j + 1) << ",neighbor," << t << ","
                    << fmt17(s.neighbors.at(j, t, 0)) << "," << fmt17(s.neighbors.at(j, t, 1))
                    << "\n";
            }
        }
    }
    if (!out) throw DataError("write failure on scene file: " + path);
}

SceneSet read_scenes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scene file: " + path);

    SceneSet set;
    int meta_tp = -1, meta_tf = -1, meta_nb = -1;
    struct SceneMeta {
        int mode = -1;
        std::vector<std::pair<double, double>> refs;
    };
    std::map<int, SceneMeta> scene_meta;
    // scene id -> agent id -> rows
    std::map<int, std::map<int, RawAgent>> raw;

    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string tag;
            ls >> tag;
            if (tag == "meta") {
                std::string kv;
                while (ls >> kv) {
                    auto eq = kv.find('=');
                    if (eq == std::string::npos) continue;
                    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
                    try {
                        if (key == "t_past") meta_tp = std::stoi(val);
                        else if (key == "t_future") meta_tf = std::stoi(val);
                        else if (key == "neighbors") meta_nb = std::stoi(val);
                        else if (key == "gen_seed") {
                            set.gen_seed = std::stoull(val);
                            set.has_gen_meta = true;
                        } else if (key == "modes") set.gen_modes = std::stoi(val);
                        else if (key == "weights") {
                            set.gen_weights.clear();
                            std::istringstream ws(val);
                            std::string tok;
                            while (std::getline(ws, tok, ',')) set.gen_weights.push_back(std::stod(tok));
                        }
                    } catch (const std::exception&) {
                        parse_fail(path, lineno, "bad meta value in '" + kv + "'");
                    }
                }
            } else if (tag == "scene") {
                int sid = 0;
                std::string kv;
                if (!(ls >> sid)) parse_fail(path, lineno, "bad scene meta line");
                SceneMeta sm;
                while (ls >> kv) {
                    auto eq = kv.find('=');
                    if (eq == std::string::npos) continue;
                    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
                    try {
                        if (key == "mode") sm.mode = std::stoi(val);
                        else if (key == "refs") {
                            std::istringstream rs(val);
                            std::string pair_tok;
                            while (std::getline(rs, pair_tok, ';')) {
                                auto colon = pair_tok.find(':');
                                if (colon == std::string::npos) {
                                    parse_fail(path, lineno, "bad refs entry '" + pair_tok + "'");
                                }
                                sm.refs.emplace_back(std::stod(pair_tok.substr(0, colon)),
                                                     std::stod(pair_tok.substr(colon + 1)));
                            }
                        }
                    } catch (const DataError&) {
                        throw;
                    } catch (const std::exception&) {
                        parse_fail(path, lineno, "bad scene meta value in '" + kv + "'");
                    }
                }
                scene_meta[sid] = std::move(sm);
            }
            continue;
        }
        if (!header_seen) {
            if (line != "scene_id,agent_id,role,t,x,y") {
                parse_fail(path, lineno, "missing or malformed header row (expected "
                                         "'scene_id,agent_id,role,t,x,y')");
            }
            header_seen = true;
            continue;
        }
        auto fields = split_csv(line);
        if (fields.size() != 6) parse_fail(path, lineno, "expected 6 fields");
        int sid = 0, aid = 0, t = 0;
        double x = 0.0, y = 0.0;
        try {
            sid = std::stoi(fields[0]);
            aid = std::stoi(fields[1]);
            t = std::stoi(fields[3]);
            x = std::stod(fields[4]);
            y = std::stod(fields[5]);
        } catch (const std::exception&) {
            parse_fail(path, lineno, "bad numeric field");
        }
        const std::string& role = fields[2];
        if (role != "ego" && role != "neighbor") {
            parse_fail(path, lineno, "unknown role '" + role + "'");
        }
        if (t < 0) parse_fail(path, lineno, "negative timestamp");
        RawAgent& agent = raw[sid][aid];
        if (agent.xs.empty()) agent.role = role;
        else if (agent.role != role) parse_fail(path, lineno, "agent changes role mid-scene");
        if (static_cast<std::size_t>(t) >= agent.xs.size()) {
            agent.xs.resize(static_cast<std::size_t>(t) + 1);
            agent.ys.resize(static_cast<std::size_t>(t) + 1);
            agent.seen.resize(static_cast<std::size_t>(t) + 1, false);
        }
        if (agent.seen[static_cast<std::size_t>(t)]) parse_fail(path, lineno, "duplicate timestamp");
        agent.seen[static_cast<std::size_t>(t)] = true;
        agent.xs[static_cast<std::size_t>(t)] = x;
        agent.ys[static_cast<std::size_t>(t)] = y;
    }
    if (!header_seen) throw DataError(path + ": missing header row");
    if (raw.empty()) throw DataError(path + ": no scenes");

    // Infer T_p / T_f from metadata or from the first scene's shape.
    int t_past = meta_tp, t_future = meta_tf;
    if (t_past < 0) {
        // Neighbor rows span exactly the past; fall back to ego length if
        // there are no neighbors (then the file cannot carry futures).
        std::size_t nb_len = 0, ego_len = 0;
        for (const auto& [aid, agent] : raw.begin()->second) {
            if (agent.role == "neighbor") nb_len = std::max(nb_len, agent.xs.size());
            else ego_len = agent.xs.size();
        }
        if (nb_len > 0) {
            t_past = static_cast<int>(nb_len);
            t_future = static_cast<int>(ego_len - nb_len);
        } else {
            t_past = static_cast<int>(ego_len);
            t_future = 0;
        }
    }
    if (t_past < 1) throw DataError(path + ": cannot infer past length");

    set.t_past = t_past;
    set.t_future = std::max(t_future, 0);

    int expected_neighbors = -1;
    for (auto& [sid, agents] : raw) {
        TrajectoryScene scene;
        scene.id = sid;
        const RawAgent* ego = nullptr;
        std::vector<const RawAgent*> nbs;
        for (auto& [aid, agent] : agents) {
            for (bool s : agent.seen) {
                if (!s) throw DataError(path + ": scene " + std::to_string(sid) +
                                        " has a gap in timestamps for agent " + std::to_string(aid));
            }
            if (agent.role == "ego") {
                if (ego) throw DataError(path + ": scene " + std::to_string(sid) + " has two egos");
                ego = &agent;
            } else {
                nbs.push_back(&agent);
            }
        }
        if (!ego) throw DataError(path + ": scene " + std::to_string(sid) + " has no ego");
        const int ego_len = static_cast<int>(ego->xs.size());
        if (ego_len != t_past && ego_len != t_past + set.t_future) {
            throw DataError(path + ": scene " + std::to_string(sid) + " ego has " +
                            std::to_string(ego_len) + " rows; expected " + std::to_string(t_past) +
                            " or " + std::to_string(t_past + set.t_future));
        }
        for (const RawAgent* nb : nbs) {
            if (static_cast<int>(nb->xs.size()) != t_past) {
                throw DataError(path + ": scene " + std::to_string(sid) +
                                " neighbor must cover exactly the past (" + std::to_string(t_past) +
                                " rows), got " + std::to_string(nb->xs.size()));
            }
        }
        if (expected_neighbors < 0) expected_neighbors = static_cast<int>(nbs.size());
        else if (expected_neighbors != static_cast<int>(nbs.size())) {
            throw DataError(path + ": scene " + std::to_string(sid) +
                            " has inconsistent neighbor count");
        }

        scene.past = Array({t_past, 2});
        for (int t = 0; t < t_past; ++t) {
            scene.past.at(t, 0) = ego->xs[static_cast<std::size_t>(t)];
            scene.past.at(t, 1) = ego->ys[static_cast<std::size_t>(t)];
        }
        if (ego_len > t_past) {
            scene.future = Array({ego_len - t_past, 2});
            for (int t = t_past; t < ego_len; ++t) {
                scene.future.at(t - t_past, 0) = ego->xs[static_cast<std::size_t>(t)];
                scene.future.at(t - t_past, 1) = ego->ys[static_cast<std::size_t>(t)];
            }
        }
        scene.n_neighbors = static_cast<int>(nbs.size());
        if (!nbs.empty()) {
            scene.neighbors = Array({scene.n_neighbors, t_past, 2});
            for (int j = 0; j < scene.n_neighbors; ++j) {
                for (int t = 0; t < t_past; ++t) {
                    scene.neighbors.at(j, t, 0) = nbs[static_cast<std::size_t>(j)]->xs[static_cast<std::size_t>(t)];
                    scene.neighbors.at(j, t, 1) = nbs[static_cast<std::size_t>(j)]->ys[static_cast<std::size_t>(t)];
                }
            }
        }
        auto mit = scene_meta.find(sid);
        if (mit != scene_meta.end() && mit->second.mode >= 0 && !mit->second.refs.empty()) {
            scene.mode_label = mit->second.mode;
            scene.mode_refs = Array({static_cast<int>(mit->second.refs.size()), 2});
            for (std::size_t m = 0; m < mit->second.refs.size(); ++m) {
                scene.mode_refs.at(static_cast<int>(m), 0) = mit->second.refs[m].first;
                scene.mode_refs.at(static_cast<int>(m), 1) = mit->second.refs[m].second;
            }
        }
        set.scenes.push_back(std::move(scene));
    }
    set.n_neighbors = std::max(expected_neighbors, 0);
    if (meta_nb >= 0 && meta_nb != set.n_neighbors) {
        throw DataError(path + ": neighbor count disagrees with '# meta neighbors'");
    }
    return set;
}

std::pair<SceneSet, SceneSet> split(const SceneSet& set, double train_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0) || !(train_frac < 1.0)) {
        throw ConfigError("split: train fraction must lie strictly between 0 and 1");
    }
    std::vector<std::size_t> order(set.scenes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t n_train =
        static_cast<std::size_t>(train_frac * static_cast<double>(set.scenes.size()));
    auto make_part = [&](std::size_t lo, std::size_t hi) {
        SceneSet part = set;
        part.scenes.clear();
        for (std::size_t i = lo; i < hi; ++i) part.scenes.push_back(set.scenes[order[i]]);
        return part;
    };
    return {make_part(0, n_train), make_part(n_train, order.size())};
}

}  // namespace led
