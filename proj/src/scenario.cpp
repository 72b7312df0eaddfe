#include "voltmesh/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace voltmesh {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

[[noreturn]] void parse_fail(const std::string& file, int line, const std::string& msg) {
    std::ostringstream os;
    os << file << ":" << line << ": " << msg;
    throw Error(ErrorCode::Parse, os.str());
}

double to_double(const std::string& tok, const std::string& file, int line,
                 const std::string& field) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        parse_fail(file, line, "field '" + field + "': expected a number, got '" + tok + "'");
    if (!std::isfinite(v)) parse_fail(file, line, "field '" + field + "': non-finite value");
    return v;
}

int to_int(const std::string& tok, const std::string& file, int line, const std::string& field) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        parse_fail(file, line, "field '" + field + "': expected an integer, got '" + tok + "'");
    return v;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double hour_of_day(int step, int spd, double delta_t) {
    return static_cast<double>(step % spd) * delta_t;
}

double tou_buy(double h, const SyntheticProfile& p) {
    if (h < 7.0 || h >= 23.0) return p.buy_offpeak;
    if (h >= 17.0 && h < 21.0) return p.buy_peak;
    return p.buy_mid;
}

}  // namespace

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& header) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    int lineno = 0;
    std::size_t n_fields = split(header, ',').size();
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (lineno == 1) {
            if (t != header)
                parse_fail(path, 1, "header must be exactly '" + header + "', got '" + t + "'");
            continue;
        }
        if (t.empty()) continue;
        auto fields = split(t, ',');
        if (fields.size() != n_fields) {
            std::ostringstream os;
            os << "expected " << n_fields << " fields, got " << fields.size();
            parse_fail(path, lineno, os.str());
        }
        fields.push_back(std::to_string(lineno));  // carry the source line for later errors
        rows.push_back(std::move(fields));
    }
    return rows;
}

int steps_per_day(double delta_t) {
    if (delta_t <= 0.0) throw Error(ErrorCode::InvalidArgument, "delta_t must be positive");
    return std::max(1, static_cast<int>(std::lround(24.0 / delta_t)));
}

void validate(const Scenario& sc) {
    validate(sc.cfg);
    if (sc.horizon <= 0) throw Error(ErrorCode::InvalidArgument, "scenario horizon must be > 0");
    if (static_cast<int>(sc.exog.size()) != sc.horizon)
        throw Error(ErrorCode::InvalidArgument, "exogenous series length " +
                                                    std::to_string(sc.exog.size()) +
                                                    " != horizon " + std::to_string(sc.horizon));
    for (int t = 0; t < sc.horizon; ++t) {
        const auto& e = sc.exog[t];
        bool ok = std::isfinite(e.kappa_buy) && std::isfinite(e.kappa_sell) &&
                  std::isfinite(e.kappa_v2v) && std::isfinite(e.pv_gen) && e.kappa_buy >= 0.0 &&
                  e.kappa_sell >= 0.0 && e.kappa_v2v >= 0.0 && e.pv_gen >= 0.0;
        if (!ok)
            throw Error(ErrorCode::InvalidArgument,
                        "exogenous step " + std::to_string(t) + " has negative/non-finite values");
    }
    std::vector<std::vector<const ChargerSession*>> per(sc.cfg.n_chargers);
    for (const auto& s : sc.sessions) {
        validate(s);
        if (s.charger_id < 0 || s.charger_id >= sc.cfg.n_chargers)
            throw Error(ErrorCode::InvalidArgument, "session " + std::to_string(s.session_id) +
                                                        ": charger_id " +
                                                        std::to_string(s.charger_id) +
                                                        " out of range");
        if (s.arrival_step < 0 || s.departure_step > sc.horizon)
            throw Error(ErrorCode::InvalidArgument, "session " + std::to_string(s.session_id) +
                                                        " does not fit within the horizon");
        per[s.charger_id].push_back(&s);
    }
    for (int c = 0; c < sc.cfg.n_chargers; ++c) {
        auto& v = per[c];
        std::sort(v.begin(), v.end(), [](const ChargerSession* a, const ChargerSession* b) {
            return a->arrival_step < b->arrival_step;
        });
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i - 1]->departure_step > v[i]->arrival_step) {
                std::ostringstream os;
                os << "charger " << c << ": sessions " << v[i - 1]->session_id << " and "
                   << v[i]->session_id << " overlap";
                throw Error(ErrorCode::InvalidArgument, os.str());
            }
        }
    }
}

Scenario load_scenario(const std::string& dir) {
    Scenario sc;

    // config.txt: flat key=value
    const std::string cfg_path = dir + "/config.txt";
    std::ifstream cfg_in(cfg_path);
    if (!cfg_in) throw Error(ErrorCode::Io, "cannot open " + cfg_path);
    std::map<std::string, double> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(cfg_in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) parse_fail(cfg_path, lineno, "expected key=value");
        std::string key = trim(t.substr(0, eq));
        kv[key] = to_double(trim(t.substr(eq + 1)), cfg_path, lineno, key);
    }
    auto get = [&](const std::string& key, double def) {
        auto it = kv.find(key);
        return it == kv.end() ? def : it->second;
    };
    StationConfig defaults;
    sc.cfg.n_chargers = static_cast<int>(get("n_chargers", defaults.n_chargers));
    sc.cfg.delta_t = get("delta_t", defaults.delta_t);
    sc.cfg.p_ch_max = get("p_ch_max", defaults.p_ch_max);
    sc.cfg.p_disch_max = get("p_disch_max", defaults.p_disch_max);
    sc.cfg.g_max = get("g_max", defaults.g_max);
    sc.cfg.pv_capacity = get("pv_capacity", defaults.pv_capacity);
    sc.horizon = static_cast<int>(get("horizon", 0));
    if (sc.horizon <= 0) parse_fail(cfg_path, 1, "config must set horizon > 0");
    ChargerSession session_defaults;
    double e_min = get("e_min", session_defaults.e_min);
    double eta_ch = get("eta_ch", session_defaults.eta_ch);
    double eta_disch = get("eta_disch", session_defaults.eta_disch);
    double l_cyc = get("l_cyc", session_defaults.l_cyc);
    double kappa_batt = get("kappa_batt", session_defaults.kappa_batt);

    // prices.csv
    const std::string prices_path = dir + "/prices.csv";
    auto price_rows = read_csv(prices_path, "step,buy,sell");
    // solar.csv
    const std::string solar_path = dir + "/solar.csv";
    auto solar_rows = read_csv(solar_path, "step,gen_kw");
    if (static_cast<int>(price_rows.size()) != sc.horizon)
        throw Error(ErrorCode::Parse, prices_path + ": " + std::to_string(price_rows.size()) +
                                          " rows but horizon is " + std::to_string(sc.horizon));
    if (static_cast<int>(solar_rows.size()) != sc.horizon)
        throw Error(ErrorCode::Parse, solar_path + ": " + std::to_string(solar_rows.size()) +
                                          " rows but horizon is " + std::to_string(sc.horizon));
    sc.exog.resize(sc.horizon);
    for (int t = 0; t < sc.horizon; ++t) {
        const auto& pr = price_rows[t];
        int pl = to_int(pr.back(), prices_path, 0, "line");
        if (to_int(pr[0], prices_path, pl, "step") != t)
            parse_fail(prices_path, pl, "steps must be 0.." + std::to_string(sc.horizon - 1) +
                                            " in order; expected " + std::to_string(t));
        double buy = to_double(pr[1], prices_path, pl, "buy");
        double sell = to_double(pr[2], prices_path, pl, "sell");
        if (buy < 0.0 || sell < 0.0) parse_fail(prices_path, pl, "negative price");
        const auto& so = solar_rows[t];
        int sln = to_int(so.back(), solar_path, 0, "line");
        if (to_int(so[0], solar_path, sln, "step") != t)
            parse_fail(solar_path, sln, "steps must be 0.." + std::to_string(sc.horizon - 1) +
                                            " in order; expected " + std::to_string(t));
        double gen = to_double(so[1], solar_path, sln, "gen_kw");
        if (gen < 0.0) parse_fail(solar_path, sln, "negative solar generation");
        sc.exog[t] = ExogenousStep{buy, sell, 0.5 * (buy + sell), gen};
    }

    // sessions.csv
    const std::string sessions_path = dir + "/sessions.csv";
    auto rows = read_csv(
        sessions_path,
        "session_id,charger_id,arrival_step,departure_step,e_demand_kwh,e_init_kwh,e_cap_kwh");
    struct RowRef {
        int line;
        int session_id;
        int arrival;
        int departure;
    };
    std::vector<std::vector<RowRef>> per(sc.cfg.n_chargers);
    for (const auto& r : rows) {
        int ln = to_int(r.back(), sessions_path, 0, "line");
        ChargerSession s;
        s.session_id = to_int(r[0], sessions_path, ln, "session_id");
        s.charger_id = to_int(r[1], sessions_path, ln, "charger_id");
        s.arrival_step = to_int(r[2], sessions_path, ln, "arrival_step");
        s.departure_step = to_int(r[3], sessions_path, ln, "departure_step");
        s.e_demand = to_double(r[4], sessions_path, ln, "e_demand_kwh");
        s.e_init = to_double(r[5], sessions_path, ln, "e_init_kwh");
        s.e_cap = to_double(r[6], sessions_path, ln, "e_cap_kwh");
        s.e_min = e_min;
        s.e_max = s.e_cap;
        s.eta_ch = eta_ch;
        s.eta_disch = eta_disch;
        s.l_cyc = l_cyc;
        s.kappa_batt = kappa_batt;
        if (s.charger_id < 0 || s.charger_id >= sc.cfg.n_chargers)
            parse_fail(sessions_path, ln,
                       "charger_id " + std::to_string(s.charger_id) + " out of range [0," +
                           std::to_string(sc.cfg.n_chargers - 1) + "]");
        if (s.arrival_step < 0 || s.departure_step > sc.horizon ||
            s.arrival_step >= s.departure_step)
            parse_fail(sessions_path, ln, "session must satisfy 0 <= arrival < departure <= " +
                                              std::to_string(sc.horizon));
        if (s.e_demand < 0.0) parse_fail(sessions_path, ln, "negative demand");
        if (s.e_init < 0.0 || s.e_cap <= 0.0 || s.e_init > s.e_cap)
            parse_fail(sessions_path, ln, "initial energy must lie in [0, e_cap], e_cap > 0");
        per[s.charger_id].push_back({ln, s.session_id, s.arrival_step, s.departure_step});
        sc.sessions.push_back(s);
    }
    for (int c = 0; c < sc.cfg.n_chargers; ++c) {
        auto& v = per[c];
        std::sort(v.begin(), v.end(),
                  [](const RowRef& a, const RowRef& b) { return a.arrival < b.arrival; });
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i - 1].departure > v[i].arrival) {
                std::ostringstream os;
                os << "charger " << c << ": sessions on rows " << v[i - 1].line << " and "
                   << v[i].line << " overlap";
                parse_fail(sessions_path, v[i].line, os.str());
            }
        }
    }
    validate(sc);
    return sc;
}

void save_scenario(const Scenario& sc, const std::string& dir) {
    validate(sc);
    // The config file stores one set of per-session battery parameters, so a
    // heterogeneous session list cannot round-trip.
    for (const auto& s : sc.sessions) {
        const auto& f = sc.sessions.front();
        if (s.e_min != f.e_min || s.eta_ch != f.eta_ch || s.eta_disch != f.eta_disch ||
            s.l_cyc != f.l_cyc || s.kappa_batt != f.kappa_batt || s.e_max != s.e_cap)
            throw Error(ErrorCode::InvalidArgument,
                        "save_scenario: sessions must share battery parameters");
    }
    ChargerSession sd = sc.sessions.empty() ? ChargerSession{} : sc.sessions.front();

    auto open = [&](const std::string& name) {
        std::ofstream out(dir + "/" + name);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + dir + "/" + name);
        return out;
    };
    {
        auto out = open("config.txt");
        out << "n_chargers=" << sc.cfg.n_chargers << "\n";
        out << "horizon=" << sc.horizon << "\n";
        out << "delta_t=" << fmt(sc.cfg.delta_t) << "\n";
        out << "p_ch_max=" << fmt(sc.cfg.p_ch_max) << "\n";
        out << "p_disch_max=" << fmt(sc.cfg.p_disch_max) << "\n";
        out << "g_max=" << fmt(sc.cfg.g_max) << "\n";
        out << "pv_capacity=" << fmt(sc.cfg.pv_capacity) << "\n";
        out << "e_min=" << fmt(sd.e_min) << "\n";
        out << "eta_ch=" << fmt(sd.eta_ch) << "\n";
        out << "eta_disch=" << fmt(sd.eta_disch) << "\n";
        out << "l_cyc=" << fmt(sd.l_cyc) << "\n";
        out << "kappa_batt=" << fmt(sd.kappa_batt) << "\n";
    }
    {
        auto out = open("prices.csv");
        out << "step,buy,sell\n";
        for (int t = 0; t < sc.horizon; ++t)
            out << t << "," << fmt(sc.exog[t].kappa_buy) << "," << fmt(sc.exog[t].kappa_sell)
                << "\n";
    }
    {
        auto out = open("solar.csv");
        out << "step,gen_kw\n";
        for (int t = 0; t < sc.horizon; ++t) out << t << "," << fmt(sc.exog[t].pv_gen) << "\n";
    }
    {
        auto out = open("sessions.csv");
        out << "session_id,charger_id,arrival_step,departure_step,e_demand_kwh,e_init_kwh,e_cap_"
               "kwh\n";
        for (const auto& s : sc.sessions)
            out << s.session_id << "," << s.charger_id << "," << s.arrival_step << ","
                << s.departure_step << "," << fmt(s.e_demand) << "," << fmt(s.e_init) << ","
                << fmt(s.e_cap) << "\n";
    }
}

SyntheticProfile synthetic_profile(const std::string& name) {
    SyntheticProfile p;
    if (name == "default" || name.empty()) return p;
    if (name == "busy") {
        p.arrival_peak_per_hour = 0.9;
        p.arrival_base_per_hour = 0.15;
        p.stay_max_hours = 8.0;
        return p;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown synthetic profile '" + name + "'");
}

Scenario generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_chargers <= 0 || spec.horizon <= 0)
        throw Error(ErrorCode::InvalidArgument, "synthetic spec needs n_chargers > 0, horizon > 0");
    Scenario sc;
    sc.cfg = spec.cfg;
    sc.cfg.n_chargers = spec.n_chargers;
    sc.horizon = spec.horizon;
    Rng rng(spec.seed);
    const auto& p = spec.profile;
    int spd = steps_per_day(sc.cfg.delta_t);

    sc.exog.resize(sc.horizon);
    for (int t = 0; t < sc.horizon; ++t) {
        double h = hour_of_day(t, spd, sc.cfg.delta_t);
        double buy = tou_buy(h, p);
        double sell = p.sell_base + p.sell_amplitude * std::sin(2.0 * kPi * (h - 6.0) / 24.0) +
                      p.sell_noise_std * rng.normal();
        sell = std::clamp(sell, 0.005, buy);
        double wobble = std::clamp(1.0 + p.solar_noise_std * rng.normal(), 0.7, 1.3);
        double gen = 0.0;
        if (h >= 6.0 && h < 18.0)
            gen = sc.cfg.pv_capacity * std::pow(std::sin(kPi * (h - 6.0) / 12.0), 1.5) * wobble;
        sc.exog[t] = ExogenousStep{buy, sell, 0.5 * (buy + sell), gen};
    }

    // Bernoulli-thinned arrivals: per free charger, per step, an arrival occurs
    // with probability lambda(hour) * delta_t, lambda peaking mid-morning.
    for (int c = 0; c < spec.n_chargers; ++c) {
        int t = 0;
        while (t < sc.horizon - 1) {
            double h = hour_of_day(t, spd, sc.cfg.delta_t);
            double z = (h - p.arrival_peak_hour) / p.arrival_spread_hours;
            double lam =
                p.arrival_base_per_hour +
                (p.arrival_peak_per_hour - p.arrival_base_per_hour) * std::exp(-0.5 * z * z);
            if (rng.uniform() < lam * sc.cfg.delta_t) {
                double stay = rng.uniform(p.stay_min_hours, p.stay_max_hours);
                int dur = std::max(1, static_cast<int>(std::lround(stay / sc.cfg.delta_t)));
                int dep = std::min(sc.horizon, t + dur);
                ChargerSession s;
                s.charger_id = c;
                s.arrival_step = t;
                s.departure_step = dep;
                s.e_cap = p.e_cap_kwh;
                s.e_max = p.e_cap_kwh;
                s.e_init = std::max(s.e_min, s.e_cap * rng.uniform(0.1, 0.4));
                double amount = rng.uniform(p.demand_min_kwh, p.demand_max_kwh);
                s.e_demand = std::min(s.e_cap, s.e_init + amount);
                sc.sessions.push_back(s);
                t = dep;
            } else {
                ++t;
            }
        }
    }
    std::stable_sort(sc.sessions.begin(), sc.sessions.end(),
                     [](const ChargerSession& a, const ChargerSession& b) {
                         if (a.arrival_step != b.arrival_step) return a.arrival_step < b.arrival_step;
                         return a.charger_id < b.charger_id;
                     });
    for (std::size_t i = 0; i < sc.sessions.size(); ++i)
        sc.sessions[i].session_id = static_cast<int>(i);
    validate(sc);
    return sc;
}

Scenario generate_synthetic(int n_chargers, int days, std::uint64_t seed,
                            const std::string& profile) {
    SyntheticSpec spec;
    spec.n_chargers = n_chargers;
    spec.seed = seed;
    spec.profile = synthetic_profile(profile);
    spec.horizon = days * steps_per_day(spec.cfg.delta_t);
    return generate_synthetic(spec);
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
    SyntheticSpec spec;
    if (trim(text).empty()) return spec;
    // Resolved after the token loop so key order cannot matter.
    int days = 0;
    double pv_per_charger = -1.0, g_per_charger = -1.0;
    for (const auto& tok : split(text, ',')) {
        if (tok.empty()) continue;
        std::size_t eq = tok.find('=');
        if (eq == std::string::npos) {
            std::size_t x = tok.find('x');
            if (x == std::string::npos)
                throw Error(ErrorCode::Parse,
                            "synthetic spec token '" + tok + "' is neither NxM nor key=value");
            spec.n_chargers = to_int(tok.substr(0, x), "synthetic-spec", 1, "n_chargers");
            spec.horizon = to_int(tok.substr(x + 1), "synthetic-spec", 1, "steps");
            continue;
        }
        std::string key = trim(tok.substr(0, eq));
        std::string val = trim(tok.substr(eq + 1));
        if (key == "n" || key == "n_chargers")
            spec.n_chargers = to_int(val, "synthetic-spec", 1, key);
        else if (key == "steps" || key == "horizon")
            spec.horizon = to_int(val, "synthetic-spec", 1, key);
        else if (key == "days")
            days = to_int(val, "synthetic-spec", 1, key);
        else if (key == "seed")
            spec.seed = static_cast<std::uint64_t>(
                std::strtoull(val.c_str(), nullptr, 10));
        else if (key == "profile")
            spec.profile = synthetic_profile(val);
        else if (key == "delta_t")
            spec.cfg.delta_t = to_double(val, "synthetic-spec", 1, key);
        else if (key == "g_max")
            spec.cfg.g_max = to_double(val, "synthetic-spec", 1, key);
        else if (key == "pv_capacity")
            spec.cfg.pv_capacity = to_double(val, "synthetic-spec", 1, key);
        else if (key == "g_per_charger")
            g_per_charger = to_double(val, "synthetic-spec", 1, key);
        else if (key == "pv_per_charger")
            pv_per_charger = to_double(val, "synthetic-spec", 1, key);
        else if (key == "p_ch_max")
            spec.cfg.p_ch_max = to_double(val, "synthetic-spec", 1, key);
        else if (key == "p_disch_max")
            spec.cfg.p_disch_max = to_double(val, "synthetic-spec", 1, key);
        else
            throw Error(ErrorCode::Parse, "unknown synthetic spec key '" + key + "'");
    }
    if (days > 0) spec.horizon = days * steps_per_day(spec.cfg.delta_t);
    if (pv_per_charger >= 0.0) spec.cfg.pv_capacity = pv_per_charger * spec.n_chargers;
    if (g_per_charger >= 0.0) spec.cfg.g_max = g_per_charger * spec.n_chargers;
    if (spec.n_chargers <= 0 || spec.horizon <= 0)
        throw Error(ErrorCode::Parse, "synthetic spec needs n_chargers > 0 and steps > 0");
    return spec;
}

}  // namespace voltmesh
