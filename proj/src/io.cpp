#include "vprof/io.hpp"

#include <fstream>

namespace vprof {

namespace {

Json vec_json(const Vec& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Json mat_json(const Mat& m) {
    Json rows = Json::array();
    for (int i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
    return out;
}

} // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out = open_out(path);
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << fmt17(row[i]) << (i + 1 < row.size() ? "," : "\n");
    }
    if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

void write_json(const std::string& path, const Json& j) {
    std::ofstream out = open_out(path);
    out << j.dump(2) << "\n";
    if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

Json to_json(const SpectralSplit& split) {
    Json j;
    j["dim"] = split.dim;
    Json evs = Json::array();
    for (int i = 0; i < split.eigenvalues.size(); ++i)
        evs.push_back({{"re", split.eigenvalues(i).real()}, {"im", split.eigenvalues(i).imag()}});
    j["eigenvalues"] = evs;
    j["dim_stable"] = split.dim_s();
    j["dim_unstable"] = split.dim_u();
    j["dim_center"] = split.dim_c();
    if (split.beta_plus) j["beta_plus"] = *split.beta_plus;
    if (split.beta_minus) j["beta_minus"] = *split.beta_minus;
    j["tol_zero"] = split.tol_zero;
    j["basis_stable"] = mat_json(split.basis_s);
    j["basis_unstable"] = mat_json(split.basis_u);
    j["basis_center"] = mat_json(split.basis_c);
    j["proj_stable"] = mat_json(split.proj_s);
    j["proj_unstable"] = mat_json(split.proj_u);
    j["proj_center"] = mat_json(split.proj_c);
    return j;
}

Json to_json(const ManifoldChart& chart) {
    Json j;
    switch (chart.kind) {
        case ChartKind::Center: j["kind"] = "center"; break;
        case ChartKind::Stable: j["kind"] = "stable"; break;
        case ChartKind::UniformlyStable: j["kind"] = "uniformly-stable"; break;
        case ChartKind::Slaving: j["kind"] = "slaving"; break;
    }
    j["ambient_dim"] = chart.ambient_dim;
    j["base_dim"] = chart.base_dim();
    j["equilibrium"] = vec_json(chart.equilibrium);
    j["base"] = mat_json(chart.base);
    j["delta"] = chart.delta;
    j["eta"] = chart.eta;
    j["horizon"] = chart.horizon;
    j["fp_tol"] = chart.fp_tol;
    j["tangency_residual"] = chart.tangency_residual;
    j["contraction_ratio"] = chart.contraction_ratio;
    j["pts_per_axis"] = chart.pts_per_axis;
    Json values = Json::array();
    for (const Vec& v : chart.values) values.push_back(vec_json(v));
    j["grid_values"] = values;
    return j;
}

Json to_json(const WaveFan& fan) {
    Json j;
    j["family"] = fan.family + 1; // 1-based in reports
    j["u_minus"] = vec_json(fan.u_minus);
    j["u_plus"] = vec_json(fan.u_plus);
    j["s"] = fan.s;
    Json segs = Json::array();
    for (const auto& seg : fan.segments) {
        Json s;
        if (seg.is_jump) {
            s["type"] = "jump";
            s["tau_from"] = seg.jump.tau_from;
            s["tau_to"] = seg.jump.tau_to;
            s["speed"] = seg.jump.speed;
            s["u_from"] = vec_json(seg.jump.u_from);
            s["u_to"] = vec_json(seg.jump.u_to);
            s["rh_residual"] = seg.jump.rh_residual;
        } else {
            s["type"] = "rarefaction";
            s["tau_from"] = seg.rarefaction.tau_from;
            s["tau_to"] = seg.rarefaction.tau_to;
            s["speed_from"] = seg.rarefaction.speed_from;
            s["speed_to"] = seg.rarefaction.speed_to;
        }
        segs.push_back(s);
    }
    j["segments"] = segs;
    return j;
}

Json to_json(const ConnectionReport& report) {
    Json j;
    j["connected"] = report.connected;
    j["miss_distance"] = report.miss_distance;
    j["rh_residual"] = report.rh_residual;
    j["detail"] = report.detail;
    return j;
}

Json to_json(const HypothesisReport& report) {
    Json j;
    j["n_samples"] = report.n_samples;
    j["radius"] = report.radius;
    Json hs = Json::array();
    for (int i = 0; i < 6; ++i) {
        const HypothesisEntry& h = report.hyp[i];
        Json e;
        e["hypothesis"] = "H" + std::to_string(i + 1);
        e["status"] = h.status == HypStatus::Pass ? "pass"
                      : h.status == HypStatus::Fail ? "fail"
                                                    : "untestable";
        e["residual"] = h.residual;
        if (h.witness.size()) e["witness"] = vec_json(h.witness);
        if (!h.note.empty()) e["note"] = h.note;
        hs.push_back(e);
    }
    j["hypotheses"] = hs;
    j["all_pass"] = report.all_pass();
    return j;
}

void write_profile_csv(const std::string& path, const Profile& prof) {
    const int N = static_cast<int>(prof.u_left.size());
    std::vector<std::string> header{"y"};
    for (int i = 0; i < N; ++i) header.push_back("U" + std::to_string(i + 1));
    for (int i = 0; i < N; ++i) header.push_back("p" + std::to_string(i + 1));
    std::vector<std::vector<double>> rows;
    rows.reserve(prof.y.size());
    for (std::size_t k = 0; k < prof.y.size(); ++k) {
        std::vector<double> row{prof.y[k]};
        for (int i = 0; i < N; ++i) row.push_back(prof.U[k](i));
        for (int i = 0; i < N; ++i) row.push_back(prof.p[k](i));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

Json profile_metadata(const Profile& prof) {
    Json j;
    j["u_left"] = vec_json(prof.u_left);
    j["u_right"] = vec_json(prof.u_right);
    j["sigma"] = prof.sigma;
    j["rate_left"] = prof.rate_left;
    j["rate_right"] = prof.rate_right;
    j["n_points"] = prof.y.size();
    if (!prof.y.empty()) {
        j["y_min"] = prof.y.front();
        j["y_max"] = prof.y.back();
    }
    return j;
}

} // namespace vprof
