#include "gridloc/grid_model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>

namespace gridloc {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Row {
    std::size_t line = 0;
    std::vector<double> values;
};

struct Table {
    bool present = false;
    std::size_t line = 0;
    std::vector<Row> rows;
};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string_view strip_comment(std::string_view s) {
    const auto pos = s.find('%');
    return pos == std::string_view::npos ? s : s.substr(0, pos);
}

[[noreturn]] void fail_at(std::size_t line, const std::string& what) {
    throw CaseError("line " + std::to_string(line) + ": " + what);
}

std::vector<double> parse_numbers(std::string_view s, std::size_t line) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',' || s[i] == '\r')) ++i;
        if (i >= s.size()) break;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != ',' && s[j] != '\r') ++j;
        const auto token = s.substr(i, j - i);
        double v = 0.0;
        const char* begin = token.data();
        if (!token.empty() && token.front() == '+') ++begin;
        const auto [ptr, ec] = std::from_chars(begin, token.data() + token.size(), v);
        if (ec != std::errc{} || ptr != token.data() + token.size()) {
            fail_at(line, "malformed table row: bad number '" + std::string(token) + "'");
        }
        out.push_back(v);
        i = j;
    }
    return out;
}

struct RawCase {
    std::string name;
    bool has_base = false;
    double base_mva = 100.0;
    Table bus, gen, branch;
};

RawCase scan(std::string_view text) {
    RawCase raw;
    Table* current = nullptr;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        auto line = trim(strip_comment(text.substr(pos, end - pos)));
        pos = end + 1;
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }

        if (current == nullptr) {
            if (line.starts_with("function")) {
                const auto eq = line.find('=');
                if (eq != std::string_view::npos) raw.name = std::string(trim(line.substr(eq + 1)));
            } else if (line.starts_with("mpc.")) {
                const auto eq = line.find('=');
                if (eq == std::string_view::npos) fail_at(line_no, "expected '=' in assignment");
                const auto key = trim(line.substr(4, eq - 4));
                auto rhs = trim(line.substr(eq + 1));
                if (key == "baseMVA") {
                    if (rhs.ends_with(';')) rhs.remove_suffix(1);
                    const auto v = parse_numbers(rhs, line_no);
                    if (v.size() != 1) fail_at(line_no, "baseMVA must be a single number");
                    raw.base_mva = v[0];
                    raw.has_base = true;
                } else if (key == "bus" || key == "gen" || key == "branch") {
                    Table& t = key == "bus" ? raw.bus : key == "gen" ? raw.gen : raw.branch;
                    if (t.present) fail_at(line_no, "duplicate " + std::string(key) + " section");
                    t.present = true;
                    t.line = line_no;
                    if (!rhs.starts_with('[')) fail_at(line_no, "expected '[' after mpc." + std::string(key));
                    rhs.remove_prefix(1);
                    current = &t;
                    line = trim(rhs);
                    if (line.empty()) continue;
                } else {
                    // Other mpc fields (version, gencost, areas, ...) are not needed.
                    if (rhs.starts_with('[') && rhs.find(']') == std::string_view::npos) {
                        // Skip over a multi-line matrix we do not use.
                        while (pos <= text.size()) {
                            auto e2 = text.find('\n', pos);
                            if (e2 == std::string_view::npos) e2 = text.size();
                            ++line_no;
                            const auto l2 = strip_comment(text.substr(pos, e2 - pos));
                            pos = e2 + 1;
                            if (l2.find(']') != std::string_view::npos || e2 == text.size()) break;
                        }
                    }
                    continue;
                }
            } else {
                continue;
            }
        }

        if (current != nullptr) {
            bool closes = false;
            const auto close = line.find(']');
            if (close != std::string_view::npos) {
                closes = true;
                line = line.substr(0, close);
            }
            // A row may be terminated by ';' or by the newline; several rows can share a line.
            std::size_t start = 0;
            while (start <= line.size()) {
                auto semi = line.find(';', start);
                if (semi == std::string_view::npos) semi = line.size();
                const auto cell = trim(line.substr(start, semi - start));
                if (!cell.empty()) current->rows.push_back({line_no, parse_numbers(cell, line_no)});
                start = semi + 1;
            }
            if (closes) current = nullptr;
        }
        if (end == text.size()) break;
    }
    if (current != nullptr) fail_at(line_no, "unterminated matrix block");
    return raw;
}

BusType bus_type_from_code(double code, std::size_t line) {
    switch (static_cast<int>(code)) {
        case 1: return BusType::PQ;
        case 2: return BusType::PV;
        case 3: return BusType::Slack;
        default: fail_at(line, "unsupported bus type " + std::to_string(static_cast<int>(code)));
    }
}

}  // namespace

std::size_t GridCase::index_of(int bus_id) const {
    const auto it = id_to_index.find(bus_id);
    if (it == id_to_index.end()) throw CaseError("unknown bus id " + std::to_string(bus_id));
    return it->second;
}

std::size_t GridCase::slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].type == BusType::Slack) return i;
    }
    throw CaseError("no slack bus");
}

void GridCase::finalize() {
    id_to_index.clear();
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (!id_to_index.emplace(buses[i].id, i).second) {
            throw CaseError("duplicate bus id " + std::to_string(buses[i].id));
        }
    }
}

bool is_connected(const GridCase& grid) {
    const std::size_t n = grid.size();
    if (n == 0) return false;
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& br : grid.branches) {
        if (!br.in_service) continue;
        const auto f = grid.index_of(br.from);
        const auto t = grid.index_of(br.to);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        for (const auto v : adj[u]) {
            if (!seen[v]) {
                seen[v] = true;
                ++count;
                q.push(v);
            }
        }
    }
    return count == n;
}

void validate_case(const GridCase& grid) {
    if (grid.buses.empty()) throw CaseError("case has no buses");
    if (grid.id_to_index.size() != grid.buses.size()) throw CaseError("bus index not finalized");
    std::size_t slack = 0;
    for (const auto& b : grid.buses) slack += b.type == BusType::Slack ? 1 : 0;
    if (slack == 0) throw CaseError("no slack bus");
    if (slack > 1) throw CaseError("more than one slack bus");
    for (const auto& br : grid.branches) {
        if (!grid.id_to_index.contains(br.from) || !grid.id_to_index.contains(br.to)) {
            throw CaseError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            " references a missing bus");
        }
    }
    for (const auto& g : grid.generators) {
        if (!grid.id_to_index.contains(g.bus)) {
            throw CaseError("generator references missing bus " + std::to_string(g.bus));
        }
    }
    if (!is_connected(grid)) throw CaseError("disconnected graph");
}

GridCase parse_case(std::string_view text) {
    const RawCase raw = scan(text);
    if (!raw.has_base) throw CaseError("missing baseMVA");
    if (!raw.bus.present) throw CaseError("missing bus section");
    if (!raw.gen.present) throw CaseError("missing gen section");
    if (!raw.branch.present) throw CaseError("missing branch section");

    GridCase grid;
    grid.name = raw.name;
    grid.base_mva = raw.base_mva;

    for (const auto& row : raw.bus.rows) {
        if (row.values.size() < 13) fail_at(row.line, "malformed table row: bus needs 13 columns");
        const auto& v = row.values;
        Bus b;
        b.id = static_cast<int>(v[0]);
        b.type = bus_type_from_code(v[1], row.line);
        b.p_load = v[2];
        b.q_load = v[3];
        b.gs = v[4];
        b.bs = v[5];
        b.v_mag_init = v[7];
        b.v_ang_init = v[8] * kDegToRad;
        if (grid.id_to_index.contains(b.id)) fail_at(row.line, "duplicate bus id " + std::to_string(b.id));
        grid.id_to_index.emplace(b.id, grid.buses.size());
        grid.buses.push_back(b);
    }
    for (const auto& row : raw.gen.rows) {
        if (row.values.size() < 10) fail_at(row.line, "malformed table row: gen needs at least 10 columns");
        const auto& v = row.values;
        Generator g;
        g.bus = static_cast<int>(v[0]);
        g.p_gen = v[1];
        g.q_gen = v[2];
        g.v_setpoint = v[5];
        g.in_service = v[7] > 0;
        if (!grid.id_to_index.contains(g.bus)) fail_at(row.line, "generator at unknown bus " + std::to_string(g.bus));
        grid.generators.push_back(g);
    }
    for (const auto& row : raw.branch.rows) {
        if (row.values.size() < 13) fail_at(row.line, "malformed table row: branch needs 13 columns");
        const auto& v = row.values;
        Branch br;
        br.from = static_cast<int>(v[0]);
        br.to = static_cast<int>(v[1]);
        br.r = v[2];
        br.x = v[3];
        br.b_charging = v[4];
        br.tap = v[8] == 0.0 ? 1.0 : v[8];
        br.shift = v[9] * kDegToRad;
        br.in_service = v[10] > 0;
        if (!grid.id_to_index.contains(br.from) || !grid.id_to_index.contains(br.to)) {
            fail_at(row.line, "branch references a missing bus");
        }
        grid.branches.push_back(br);
    }
    validate_case(grid);
    return grid;
}

GridCase load_case_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CaseError("cannot open case file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto grid = parse_case(ss.str());
    if (grid.name.empty()) grid.name = path;
    return grid;
}

BranchAdmittance branch_admittance(const Branch& br) {
    if (br.r == 0.0 && br.x == 0.0) {
        throw CaseError("zero-impedance branch " + std::to_string(br.from) + "-" + std::to_string(br.to));
    }
    using C = std::complex<double>;
    const C ys = 1.0 / C(br.r, br.x);
    const C half_b(0.0, br.b_charging / 2.0);
    const C t = std::polar(br.tap, br.shift);
    BranchAdmittance a;
    a.ytt = ys + half_b;
    a.yff = a.ytt / std::norm(t);
    a.yft = -ys / std::conj(t);
    a.ytf = -ys / t;
    return a;
}

ComplexMatrix build_ybus(const GridCase& grid) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    ComplexMatrix Y = ComplexMatrix::Zero(n, n);
    for (const auto& br : grid.branches) {
        if (!br.in_service) continue;
        const auto a = branch_admittance(br);
        const auto f = static_cast<Eigen::Index>(grid.index_of(br.from));
        const auto t = static_cast<Eigen::Index>(grid.index_of(br.to));
        Y(f, f) += a.yff;
        Y(f, t) += a.yft;
        Y(t, f) += a.ytf;
        Y(t, t) += a.ytt;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = grid.buses[static_cast<std::size_t>(i)];
        Y(i, i) += std::complex<double>(b.gs, b.bs) / grid.base_mva;
    }
    return Y;
}

GraphOperators graph_operators_from_adjacency(const Eigen::MatrixXd& W) {
    const auto n = W.rows();
    GraphOperators ops;
    ops.n = static_cast<std::size_t>(n);
    ops.W = W;
    ops.degree = W.rowwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(ops.degree(i) > 0.0)) throw CaseError("isolated bus at index " + std::to_string(i));
    }
    const Eigen::VectorXd inv_sqrt = ops.degree.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd normalized = inv_sqrt.asDiagonal() * W * inv_sqrt.asDiagonal();
    ops.L = Eigen::MatrixXd::Identity(n, n) - normalized;
    // Force exact symmetry; the product above can differ in the last ulp.
    ops.L = (0.5 * (ops.L + ops.L.transpose())).eval();
    ops.L_mod = Eigen::MatrixXd::Identity(n, n) - ops.L;
    ops.L_mod_sparse = ops.L_mod.sparseView();
    return ops;
}

GraphOperators build_graph_operators(const GridCase& grid) {
    const ComplexMatrix Y = build_ybus(grid);
    const auto n = Y.rows();
    Eigen::MatrixXd W(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            W(i, j) = i == j ? 0.0 : 0.5 * (std::abs(Y(i, j)) + std::abs(Y(j, i)));
        }
    }
    return graph_operators_from_adjacency(W);
}

std::vector<int> hop_distances(const Eigen::MatrixXd& W, std::size_t source) {
    const auto n = static_cast<std::size_t>(W.rows());
    std::vector<int> dist(n, -1);
    std::queue<std::size_t> q;
    dist[source] = 0;
    q.push(source);
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        for (std::size_t v = 0; v < n; ++v) {
            if (v != u && W(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) != 0.0 && dist[v] < 0) {
                dist[v] = dist[u] + 1;
                q.push(v);
            }
        }
    }
    return dist;
}

}  // namespace gridloc
