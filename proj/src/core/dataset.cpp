#include "dataset.hpp"

#include "csv.hpp"
#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ab {

Dataset::Dataset(std::vector<Unit> units, TreatmentMode mode)
    : units_(std::move(units)), mode_(mode) {
    if (units_.empty()) return;
    d_ = static_cast<int>(units_.front().covariates.size());
    context_dim_ = static_cast<int>(units_.front().context.size());
    std::unordered_set<int64_t> ids;
    ids.reserve(units_.size());
    for (size_t i = 0; i < units_.size(); ++i) {
        const Unit& u = units_[i];
        if (static_cast<int>(u.covariates.size()) != d_)
            throw DataError("unit id " + std::to_string(u.id) + ": covariate arity " +
                            std::to_string(u.covariates.size()) + ", expected " + std::to_string(d_));
        if (static_cast<int>(u.context.size()) != context_dim_)
            throw DataError("unit id " + std::to_string(u.id) + ": context arity mismatch");
        if (u.outcome.has_value() != u.annotated)
            throw DataError("unit id " + std::to_string(u.id) + ": outcome present iff annotated violated");
        if (!std::isfinite(u.treatment))
            throw DataError("unit id " + std::to_string(u.id) + ": non-finite treatment");
        if (mode_ == TreatmentMode::binary && u.treatment != 0.0 && u.treatment != 1.0)
            throw DataError("unit id " + std::to_string(u.id) + ": non-binary treatment " +
                            format_double(u.treatment) + " in binary mode");
        if (!ids.insert(u.id).second)
            throw DataError("duplicate unit id " + std::to_string(u.id));
    }
}

int64_t Dataset::annotated_count() const {
    int64_t n = 0;
    for (const auto& u : units_) n += u.annotated;
    return n;
}

int64_t Dataset::annotated_count(int arm) const {
    int64_t n = 0;
    for (const auto& u : units_) n += (u.annotated && u.arm() == arm);
    return n;
}

int64_t Dataset::arm_count(int arm) const {
    int64_t n = 0;
    for (const auto& u : units_) n += (u.arm() == arm);
    return n;
}

Dataset Dataset::redacted() const {
    std::vector<Unit> units = units_;
    for (auto& u : units) {
        u.annotated = false;
        u.outcome.reset();
    }
    return Dataset(std::move(units), mode_);
}

uint64_t Dataset::content_hash() const {
    uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](const std::string& s) { h = fnv1a64(s, h); };
    for (const auto& u : units_) {
        mix(std::to_string(u.id));
        for (double x : u.covariates) mix(format_double(x));
        for (double c : u.context) mix(format_double(c));
        mix(format_double(u.treatment));
    }
    return h;
}

void BudgetSpec::validate() const {
    auto check = [](double v, const char* name) {
        if (!(v > 0.0 && v <= 1.0))
            throw ConfigError(std::string("budget ") + name + " must lie in (0, 1], got " + format_double(v));
    };
    switch (kind) {
        case Kind::global: check(b, "b"); break;
        case Kind::per_arm:
            check(b0, "b0");
            check(b1, "b1");
            break;
        case Kind::continuous_local:
            check(b, "b");
            if (!(h > 0.0)) throw ConfigError("bandwidth h must be positive");
            if (!std::isfinite(z0)) throw ConfigError("evaluation dose z0 must be finite");
            break;
    }
}

double BudgetSpec::batch1_probability(int arm) const {
    if (kind == Kind::per_arm) return arm == 1 ? b1 : b0;
    return b;
}

static std::string covariate_name(const CsvSchema& s, int j) {
    return s.covariate_prefix + std::to_string(j + 1);
}
static std::string context_name(const CsvSchema& s, int j) {
    return s.context_prefix + std::to_string(j + 1);
}

Dataset load_dataset(const std::string& path, const CsvSchema& schema, TreatmentMode mode) {
    CsvTable t = read_csv(path);

    const int id_col = t.column(schema.id);
    const int z_col = t.column(schema.treatment);
    const int r_col = t.column(schema.annotated); // optional
    const int y_col = t.column(schema.outcome);   // optional (planning-only datasets)
    if (id_col < 0) throw DataError(path + ": missing column '" + schema.id + "'");
    if (z_col < 0) throw DataError(path + ": missing column '" + schema.treatment + "'");

    std::vector<int> x_cols, c_cols;
    for (int j = 0;; ++j) {
        int col = t.column(covariate_name(schema, j));
        if (col < 0) break;
        x_cols.push_back(col);
    }
    if (x_cols.empty()) throw DataError(path + ": no covariate columns ('" + schema.covariate_prefix + "1', ...)");
    for (int j = 0;; ++j) {
        int col = t.column(context_name(schema, j));
        if (col < 0) break;
        c_cols.push_back(col);
    }

    std::vector<Unit> units;
    units.reserve(t.rows.size());
    for (size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = path + ": data row " + std::to_string(r + 1);
        Unit u;
        if (auto v = parse_int(row[id_col])) u.id = *v;
        else throw DataError(where + ": bad id '" + row[id_col] + "'");
        for (int col : x_cols) {
            auto v = parse_double(row[col]);
            if (!v) throw DataError(where + ": bad covariate '" + row[col] + "'");
            u.covariates.push_back(*v);
        }
        for (int col : c_cols) {
            auto v = parse_double(row[col]);
            if (!v) throw DataError(where + ": bad context value '" + row[col] + "'");
            u.context.push_back(*v);
        }
        if (auto v = parse_double(row[z_col])) u.treatment = *v;
        else throw DataError(where + ": bad treatment '" + row[z_col] + "'");

        std::optional<double> y;
        if (y_col >= 0 && !row[y_col].empty()) {
            y = parse_double(row[y_col]);
            if (!y) throw DataError(where + ": bad outcome '" + row[y_col] + "'");
        }
        if (r_col >= 0) {
            auto rv = parse_int(row[r_col]);
            if (!rv || (*rv != 0 && *rv != 1))
                throw DataError(where + ": bad annotation flag '" + row[r_col] + "'");
            u.annotated = (*rv == 1);
            if (u.annotated && !y) throw DataError(where + ": r=1 but outcome cell is empty");
            if (!u.annotated && y) throw DataError(where + ": r=0 but outcome cell is non-empty");
        } else {
            u.annotated = y.has_value(); // missing outcome => annotated=false
        }
        if (u.annotated) u.outcome = y;
        units.push_back(std::move(u));
    }
    try {
        return Dataset(std::move(units), mode);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

void save_dataset(const Dataset& ds, const std::string& path, const CsvSchema& schema) {
    CsvTable t;
    t.header.push_back(schema.id);
    for (int j = 0; j < ds.dim(); ++j) t.header.push_back(covariate_name(schema, j));
    t.header.push_back(schema.treatment);
    t.header.push_back(schema.annotated);
    t.header.push_back(schema.outcome);
    for (int j = 0; j < ds.context_dim(); ++j) t.header.push_back(context_name(schema, j));

    for (const auto& u : ds.units()) {
        std::vector<std::string> row;
        row.push_back(std::to_string(u.id));
        for (double x : u.covariates) row.push_back(format_double(x));
        row.push_back(format_double(u.treatment));
        row.push_back(u.annotated ? "1" : "0");
        row.push_back(u.outcome ? format_double(*u.outcome) : "");
        for (double c : u.context) row.push_back(format_double(c));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

OverlapReport diagnose_overlap(const Dataset& ds,
                               const std::function<double(const Unit&)>& e1_hat,
                               const std::function<double(const Unit&)>& pi_hat,
                               const ClipBounds& bounds) {
    OverlapReport rep;
    if (ds.size() == 0) {
        rep.e_min = rep.e_max = rep.pi_min = 0;
        return rep;
    }
    for (const auto& u : ds.units()) {
        const double e = e1_hat(u);
        const double pi = pi_hat(u);
        rep.e_min = std::min(rep.e_min, e);
        rep.e_max = std::max(rep.e_max, e);
        rep.pi_min = std::min(rep.pi_min, pi);
        rep.e_below += (e < bounds.e_lo);
        rep.e_above += (e > bounds.e_hi);
        rep.pi_below += (pi < bounds.pi_floor);
        if (u.arm() == 1) ++rep.arm1_count;
        else ++rep.arm0_count;
    }
    return rep;
}

} // namespace ab
