#include "cal/cmm.hpp"

#include <algorithm>

namespace cal {

int argmax_lowest(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return static_cast<int>(best);
}

double top_two_margin(std::span<const double> v) {
    if (v.size() < 2) {
        return v.empty() ? 0.0 : 1.0;
    }
    double first = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        if (x > first) {
            second = first;
            first = x;
        } else if (x > second) {
            second = x;
        }
    }
    return first - second;
}

CmmClassifier::CmmClassifier(std::shared_ptr<const MixtureModel> mixture, Eigen::MatrixXd class_given_component,
                             double smoothing)
    : mixture_(std::move(mixture)), p_(std::move(class_given_component)), delta_(smoothing) {
    if (!mixture_) {
        throw Error("cmm: mixture is required");
    }
    if (static_cast<std::size_t>(p_.cols()) != mixture_->size() || p_.rows() < 2) {
        throw Error("cmm: assignment matrix must be n_classes x J with n_classes >= 2");
    }
}

std::vector<double> CmmClassifier::posterior_from_responsibilities(std::span<const double> resp) const {
    std::vector<double> out(n_classes(), 0.0);
    for (Eigen::Index j = 0; j < p_.cols(); ++j) {
        double r = resp[static_cast<std::size_t>(j)];
        for (Eigen::Index c = 0; c < p_.rows(); ++c) {
            out[static_cast<std::size_t>(c)] += p_(c, j) * r;
        }
    }
    double sum = 0.0;
    for (double v : out) {
        sum += v;
    }
    for (auto& v : out) {
        v /= sum;
    }
    return out;
}

std::vector<double> CmmClassifier::posterior(std::span<const double> x) const {
    auto r = mixture_->responsibilities(x);
    return posterior_from_responsibilities(r);
}

int CmmClassifier::predict(std::span<const double> x) const { return argmax_lowest(posterior(x)); }

double CmmClassifier::margin(std::span<const double> x) const { return top_two_margin(posterior(x)); }

void CmmClassifier::set_column(std::size_t j, const Vector& column) {
    if (j >= n_components() || column.size() != p_.rows()) {
        throw Error("cmm: column index or size out of range");
    }
    double sum = column.sum();
    if (!(sum > 0.0)) {
        throw Error("cmm: column must have positive mass");
    }
    p_.col(static_cast<Eigen::Index>(j)) = column / sum;
}

nlohmann::json CmmClassifier::to_json(const std::string& mixture_ref) const {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index c = 0; c < p_.rows(); ++c) {
        std::vector<double> r;
        for (Eigen::Index j = 0; j < p_.cols(); ++j) {
            r.push_back(p_(c, j));
        }
        rows.push_back(std::move(r));
    }
    return {{"format", "cmm-v1"}, {"mixture_ref", mixture_ref}, {"class_given_component", rows}, {"smoothing", delta_}};
}

CmmClassifier CmmClassifier::from_json(const nlohmann::json& j, std::shared_ptr<const MixtureModel> mixture) {
    if (j.value("format", std::string()) != "cmm-v1") {
        throw Error("cmm: expected format 'cmm-v1'");
    }
    auto rows = j.at("class_given_component").get<std::vector<std::vector<double>>>();
    if (rows.empty()) {
        throw Error("cmm: empty assignment matrix");
    }
    Eigen::MatrixXd p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t c = 0; c < rows.size(); ++c) {
        if (rows[c].size() != rows.front().size()) {
            throw Error("cmm: ragged assignment matrix");
        }
        for (std::size_t k = 0; k < rows[c].size(); ++k) {
            p(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = rows[c][k];
        }
    }
    return CmmClassifier(std::move(mixture), std::move(p), j.value("smoothing", 0.0));
}

CmmClassifier fit_assignments(std::shared_ptr<const MixtureModel> mixture, const RowMatrix& labeled_resp,
                              std::span<const int> labels, std::size_t n_classes, double delta) {
    if (!mixture) {
        throw Error("cmm: mixture is required");
    }
    if (n_classes < 2) {
        throw Error("cmm: need at least 2 classes");
    }
    if (static_cast<std::size_t>(labeled_resp.rows()) != labels.size()) {
        throw Error("cmm: responsibilities and labels differ in length");
    }
    if (delta < 0.0) {
        delta = 1.0 / static_cast<double>(n_classes);
    }
    auto J = static_cast<Eigen::Index>(mixture->size());
    Eigen::MatrixXd counts = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n_classes), J, delta);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto c = labels[i];
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes) {
            throw Error("cmm: label out of range");
        }
        counts.row(c) += labeled_resp.row(static_cast<Eigen::Index>(i));
    }
    for (Eigen::Index j = 0; j < J; ++j) {
        double s = counts.col(j).sum();
        if (s > 0.0) {
            counts.col(j) /= s;
        } else {
            counts.col(j).setConstant(1.0 / static_cast<double>(n_classes));
        }
    }
    return CmmClassifier(std::move(mixture), std::move(counts), delta);
}

}  // namespace cal
