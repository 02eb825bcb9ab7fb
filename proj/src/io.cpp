#include "kfcal/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace kfcal {

using nlohmann::json;

namespace {

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("unknown key \"" + key + "\" in section \"" + section + "\"");
        }
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
    }
}

void read_vec3(const json& obj, const char* key, Eigen::Vector3d& out) {
    if (!obj.contains(key)) return;
    std::vector<double> v;
    read_field(obj, key, v);
    if (v.size() != 3) {
        throw ConfigError(std::string("\"") + key + "\" must have 3 entries");
    }
    for (int i = 0; i < 3; ++i) out[i] = v[i];
}

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec vec_from_json(const json& a) {
    Vec v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
    return v;
}

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& rows) {
    const int r = static_cast<int>(rows.size());
    if (r == 0) return Mat();
    const int c = static_cast<int>(rows[0].size());
    Mat m(r, c);
    for (int i = 0; i < r; ++i) {
        if (static_cast<int>(rows[i].size()) != c) {
            throw ConfigError("ragged matrix in JSON");
        }
        for (int j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}

CovKind kind_from_string(const std::string& s) {
    if (s == "isotropic") return CovKind::Isotropic;
    if (s == "diagonal") return CovKind::Diagonal;
    if (s == "cholesky") return CovKind::Cholesky;
    throw ConfigError("unknown parameterization kind \"" + s +
                      "\" (expected isotropic|diagonal|cholesky)");
}

GradMode mode_from_string(const std::string& s) {
    if (s == "forward") return GradMode::Forward;
    if (s == "reverse") return GradMode::Reverse;
    throw ConfigError("unknown gradient mode \"" + s + "\" (expected forward|reverse)");
}

}  // namespace

std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CovParam RunConfig::make_param() const {
    const Mat fixed_q = sim.q * Mat::Identity(6, 6);
    return CovParam::fixed_q_vary_r(param_kind, 3, fixed_q);
}

Vec RunConfig::make_theta0(const CovParam& param) const {
    if (!theta0) return param.default_theta0();
    if (theta0->size() != param.dim()) {
        throw ConfigError("theta0 has " + std::to_string(theta0->size()) +
                          " entries, kind needs " + std::to_string(param.dim()));
    }
    return *theta0;
}

GradMode RunConfig::resolved_mode() const {
    if (mode_explicit) return opt.mode;
    return param_kind == CovKind::Cholesky ? GradMode::Reverse : GradMode::Forward;
}

RunConfig default_config() { return RunConfig{}; }

RunConfig load_config(const std::filesystem::path& path) {
    const json root = load_json_file(path);
    if (!root.is_object()) throw ConfigError(path.string() + ": top level must be an object");
    check_keys(root, "(top)", {"system", "parameterization", "supervisory", "optimizer",
                               "simulation"});
    RunConfig cfg;

    if (root.contains("system")) {
        const json& s = root["system"];
        check_keys(s, "system", {"dt", "v0", "p0_scale"});
        read_field(s, "dt", cfg.sim.dt);
        read_vec3(s, "v0", cfg.sim.v0);
        read_field(s, "p0_scale", cfg.sim.p0_scale);
    }
    if (root.contains("parameterization")) {
        const json& s = root["parameterization"];
        check_keys(s, "parameterization", {"kind", "theta0"});
        if (s.contains("kind")) cfg.param_kind = kind_from_string(s.at("kind").get<std::string>());
        if (s.contains("theta0")) cfg.theta0 = vec_from_json(s.at("theta0"));
    }
    if (root.contains("supervisory")) {
        const json& s = root["supervisory"];
        check_keys(s, "supervisory", {"downsample", "distance_threshold", "alpha"});
        read_field(s, "downsample", cfg.sim.downsample);
        read_field(s, "distance_threshold", cfg.sim.dist_threshold);
        read_field(s, "alpha", cfg.sim.alpha);
    }
    if (root.contains("optimizer")) {
        const json& s = root["optimizer"];
        check_keys(s, "optimizer",
                   {"mode", "itermax", "eta0", "line_search", "grad_tol", "loss_weights"});
        if (s.contains("mode")) {
            cfg.opt.mode = mode_from_string(s.at("mode").get<std::string>());
            cfg.mode_explicit = true;
        }
        read_field(s, "itermax", cfg.opt.itermax);
        read_field(s, "eta0", cfg.opt.eta0);
        read_field(s, "line_search", cfg.opt.line_search);
        read_field(s, "grad_tol", cfg.opt.grad_tol);
        if (s.contains("loss_weights")) {
            std::vector<double> w;
            read_field(s, "loss_weights", w);
            if (w.size() != 2) throw ConfigError("loss_weights must have 2 entries");
            cfg.opt.loss_weights = {w[0], w[1]};
        }
    }
    if (root.contains("simulation")) {
        const json& s = root["simulation"];
        check_keys(s, "simulation",
                   {"n_calib", "n_test", "q", "r_base_diag", "r_base_offdiag", "r_d_diag",
                    "trials", "seed", "accel"});
        read_field(s, "n_calib", cfg.sim.n_calib);
        read_field(s, "n_test", cfg.sim.n_test);
        read_field(s, "q", cfg.sim.q);
        read_field(s, "r_base_diag", cfg.sim.r_base_diag);
        read_field(s, "r_base_offdiag", cfg.sim.r_base_offdiag);
        read_vec3(s, "r_d_diag", cfg.sim.r_d_diag);
        read_field(s, "trials", cfg.sim.trials);
        read_field(s, "seed", cfg.sim.seed);
        if (s.contains("accel")) {
            const json& a = s["accel"];
            check_keys(a, "simulation.accel",
                       {"amp1", "freq1", "phase1", "amp2", "freq2", "phase2"});
            read_vec3(a, "amp1", cfg.sim.accel.amp1);
            read_vec3(a, "freq1", cfg.sim.accel.freq1);
            read_vec3(a, "phase1", cfg.sim.accel.phase1);
            read_vec3(a, "amp2", cfg.sim.accel.amp2);
            read_vec3(a, "freq2", cfg.sim.accel.freq2);
            read_vec3(a, "phase2", cfg.sim.accel.phase2);
        }
    }
    cfg.sim.validate();
    cfg.opt.validate();
    return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
    const auto v3 = [](const Eigen::Vector3d& v) { return json::array({v[0], v[1], v[2]}); };
    json root;
    root["system"] = {{"dt", cfg.sim.dt}, {"v0", v3(cfg.sim.v0)},
                      {"p0_scale", cfg.sim.p0_scale}};
    json par = {{"kind", to_string(cfg.param_kind)}};
    if (cfg.theta0) par["theta0"] = vec_to_json(*cfg.theta0);
    root["parameterization"] = par;
    root["supervisory"] = {{"downsample", cfg.sim.downsample},
                           {"distance_threshold", cfg.sim.dist_threshold},
                           {"alpha", cfg.sim.alpha}};
    root["optimizer"] = {{"mode", to_string(cfg.resolved_mode())},
                         {"itermax", cfg.opt.itermax},
                         {"eta0", cfg.opt.eta0},
                         {"line_search", cfg.opt.line_search},
                         {"grad_tol", cfg.opt.grad_tol},
                         {"loss_weights", json::array({cfg.opt.loss_weights.w_o,
                                                       cfg.opt.loss_weights.w_s})}};
    root["simulation"] = {{"n_calib", cfg.sim.n_calib},
                          {"n_test", cfg.sim.n_test},
                          {"q", cfg.sim.q},
                          {"r_base_diag", cfg.sim.r_base_diag},
                          {"r_base_offdiag", cfg.sim.r_base_offdiag},
                          {"r_d_diag", v3(cfg.sim.r_d_diag)},
                          {"trials", cfg.sim.trials},
                          {"seed", cfg.sim.seed},
                          {"accel", {{"amp1", v3(cfg.sim.accel.amp1)},
                                     {"freq1", v3(cfg.sim.accel.freq1)},
                                     {"phase1", v3(cfg.sim.accel.phase1)},
                                     {"amp2", v3(cfg.sim.accel.amp2)},
                                     {"freq2", v3(cfg.sim.accel.freq2)},
                                     {"phase2", v3(cfg.sim.accel.phase2)}}}};
    return root.dump(2) + "\n";
}

void save_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                         const std::vector<Vec>& y) {
    std::ostringstream out;
    out << "k,x1,x2,x3,x4,x5,x6,u1,u2,u3,y1,y2,y3\n";
    const int n = static_cast<int>(traj.inputs.size());
    // Row k = 0 carries the initial state; u and y columns are zero there.
    for (int k = 0; k <= n; ++k) {
        out << k;
        for (int i = 0; i < 6; ++i) out << ',' << fmt_full(traj.states[k][i]);
        for (int i = 0; i < 3; ++i) out << ',' << (k ? fmt_full(traj.inputs[k - 1][i]) : "0");
        for (int i = 0; i < 3; ++i) out << ',' << (k ? fmt_full(y[k - 1][i]) : "0");
        out << '\n';
    }
    write_text_file(path, out.str());
}

namespace {

struct CsvTrajectory {
    Trajectory traj;
    std::vector<Vec> y;
};

CsvTrajectory load_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
    CsvTrajectory out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": bad number \"" + cell + "\"");
            }
        }
        if (vals.size() != 13) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected 13 columns, got " + std::to_string(vals.size()));
        }
        Vec x(6), u(3), yk(3);
        for (int i = 0; i < 6; ++i) x[i] = vals[1 + i];
        for (int i = 0; i < 3; ++i) u[i] = vals[7 + i];
        for (int i = 0; i < 3; ++i) yk[i] = vals[10 + i];
        out.traj.states.push_back(x);
        if (static_cast<int>(vals[0]) > 0) {
            out.traj.inputs.push_back(u);
            out.y.push_back(yk);
        }
    }
    if (out.traj.states.empty()) throw ConfigError(path.string() + ": no data rows");
    return out;
}

}  // namespace

void save_supervisory_json(const std::filesystem::path& path, const SupervisorySpec& spec,
                           double alpha) {
    json root;
    root["indices"] = spec.indices;
    root["ys"] = vec_to_json(spec.ys);
    root["Hs"] = mat_to_json(spec.Hs);
    root["Psi"] = {{"type", "isotropic"}, {"scale", alpha}};
    root["counts"] = {{"states", spec.indices.size()},
                      {"measurements", spec.obs_dim() / 3}};
    write_text_file(path, root.dump() + "\n");
}

SupervisorySpec load_supervisory_json(const std::filesystem::path& path) {
    const json root = load_json_file(path);
    SupervisorySpec spec;
    if (root.contains("indices")) {
        spec.indices = root.at("indices").get<std::vector<int>>();
    }
    if (spec.indices.empty()) return spec;
    spec.ys = vec_from_json(root.at("ys"));
    spec.Hs = mat_from_json(root.at("Hs"));
    const json& psi = root.at("Psi");
    const std::string type = psi.at("type").get<std::string>();
    if (type == "isotropic") {
        spec.Psi = psi.at("scale").get<double>() *
                   Mat::Identity(spec.ys.size(), spec.ys.size());
    } else if (type == "dense") {
        spec.Psi = mat_from_json(psi.at("data"));
    } else {
        throw ConfigError(path.string() + ": unknown Psi type \"" + type + "\"");
    }
    return spec;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
    std::filesystem::create_directories(dir);
    save_trajectory_csv(dir / "calib.csv", data.calib, data.y_calib);
    save_trajectory_csv(dir / "test.csv", data.test, data.y_test);
    save_supervisory_json(dir / "supervisory.json", data.spec, data.sim.alpha);
    json meta;
    meta["dt"] = data.sim.dt;
    meta["q"] = data.sim.q;
    meta["p0_scale"] = data.sim.p0_scale;
    meta["alpha"] = data.sim.alpha;
    meta["seed"] = data.sim.seed;
    meta["n_calib"] = static_cast<int>(data.calib.inputs.size());
    meta["n_test"] = static_cast<int>(data.test.inputs.size());
    meta["downsample"] = data.sim.downsample;
    meta["distance_threshold"] = data.sim.dist_threshold;
    write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset data;
    CsvTrajectory calib = load_trajectory_csv(dir / "calib.csv");
    data.calib = std::move(calib.traj);
    data.y_calib = std::move(calib.y);
    CsvTrajectory test = load_trajectory_csv(dir / "test.csv");
    data.test = std::move(test.traj);
    data.y_test = std::move(test.y);
    data.spec = load_supervisory_json(dir / "supervisory.json");
    const json meta = load_json_file(dir / "meta.json");
    read_field(meta, "dt", data.sim.dt);
    read_field(meta, "q", data.sim.q);
    read_field(meta, "p0_scale", data.sim.p0_scale);
    read_field(meta, "alpha", data.sim.alpha);
    read_field(meta, "downsample", data.sim.downsample);
    read_field(meta, "distance_threshold", data.sim.dist_threshold);
    std::uint64_t seed = data.sim.seed;
    read_field(meta, "seed", seed);
    data.sim.seed = seed;
    data.sim.n_calib = static_cast<int>(data.calib.inputs.size());
    data.sim.n_test = static_cast<int>(data.test.inputs.size());
    return data;
}

void save_calibration_report(const std::filesystem::path& json_path,
                             const std::filesystem::path& csv_path,
                             const CalibrationReport& rep, const CovParam& param,
                             GradMode mode) {
    json root;
    root["theta_hat"] = vec_to_json(rep.theta_hat);
    root["kind"] = to_string(param.r_kind());
    root["mode"] = to_string(mode);
    root["iterations"] = rep.iterations;
    root["converged"] = rep.converged;
    root["aborted"] = rep.aborted;
    root["note"] = rep.note;
    root["loss_history"] = rep.loss_history;
    root["grad_norm_history"] = rep.grad_norm_history;
    root["ell_o_history"] = rep.ell_o_history;
    root["ell_s_history"] = rep.ell_s_history;
    root["step_sizes"] = rep.step_sizes;
    root["iter_seconds"] = rep.iter_seconds;
    root["R_hat"] = mat_to_json(param.eval_R(rep.theta_hat));
    write_text_file(json_path, root.dump(2) + "\n");

    std::ostringstream csv;
    csv << "iter,loss,ell_o,ell_s,grad_norm,step_size,seconds\n";
    for (std::size_t i = 0; i < rep.loss_history.size(); ++i) {
        csv << i << ',' << fmt_full(rep.loss_history[i]) << ','
            << fmt_full(rep.ell_o_history[i]) << ',' << fmt_full(rep.ell_s_history[i])
            << ',' << fmt_full(rep.grad_norm_history[i]) << ','
            << (i < rep.step_sizes.size() ? fmt_full(rep.step_sizes[i]) : "0") << ','
            << (i < rep.iter_seconds.size() ? fmt_full(rep.iter_seconds[i]) : "0") << '\n';
    }
    write_text_file(csv_path, csv.str());
}

Vec load_theta_hat(const std::filesystem::path& json_path) {
    const json root = load_json_file(json_path);
    if (!root.contains("theta_hat")) {
        throw ConfigError(json_path.string() + ": no theta_hat field");
    }
    return vec_from_json(root.at("theta_hat"));
}

void save_loss_json(const std::filesystem::path& path, const LossBreakdown& loss) {
    json root;
    root["ell_o"] = loss.ell_o;
    root["ell_s"] = loss.ell_s;
    root["total"] = loss.total;
    root["supervisory_residual"] = vec_to_json(loss.v);
    write_text_file(path, root.dump(2) + "\n");
}

void save_loss_per_step_csv(const std::filesystem::path& path, const LossBreakdown& loss,
                            const FilterTrace& trace) {
    std::ostringstream out;
    out << "k,l_k,r_norm\n";
    for (std::size_t i = 0; i < loss.per_step.size(); ++i) {
        out << (i + 1) << ',' << fmt_full(loss.per_step[i]) << ','
            << fmt_full(trace.steps[i].r.norm()) << '\n';
    }
    write_text_file(path, out.str());
}

void save_montecarlo_csv(const std::filesystem::path& path, const MonteCarloResult& res) {
    std::ostringstream out;
    out << "method,mean_rmse,se_rmse,mean_rel_R_err,mean_sup_states,mean_sup_pairs,"
           "trials_ok,failures\n";
    for (const auto& row : res.rows) {
        out << row.method << ',' << fmt_full(row.mean_rmse) << ',' << fmt_full(row.se_rmse)
            << ',' << fmt_full(row.mean_rel_r_err) << ',' << fmt_full(row.mean_states)
            << ',' << fmt_full(row.mean_pairs) << ',' << row.trials_ok << ','
            << row.failures << '\n';
    }
    write_text_file(path, out.str());
}

void save_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out << "quantity,p,N,seconds,trace_elements\n";
    for (const auto& row : rows) {
        out << row.quantity << ',' << row.p << ',' << row.n << ',' << fmt_full(row.seconds)
            << ',' << row.trace_elements << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace kfcal
