#include "entk/dataset.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "entk/rng.hpp"

namespace entk {

Dataset make_blobs(std::size_t n, std::size_t dim, double separation, std::uint64_t seed) {
    if (n == 0 || dim == 0) throw Error(ErrorKind::Usage, "blobs need n >= 1 and dim >= 1");
    Dataset ds;
    ds.x = Tensor::zeros({n, dim});
    ds.labels.resize(n);
    GaussianStream gauss(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        ds.labels[i] = cls;
        const double center = (cls == 0 ? -0.5 : 0.5) * separation;
        double* row = ds.x.row_ptr(i);
        for (std::size_t d = 0; d < dim; ++d) row[d] = gauss.next();
        row[0] += center;
    }
    return ds;
}

namespace {

bool is_bare_integer(const std::string& tok) {
    if (tok.empty()) return false;
    std::size_t i = (tok[0] == '-' || tok[0] == '+') ? 1 : 0;
    if (i == tok.size()) return false;
    for (; i < tok.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
    }
    return true;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        // trim surrounding whitespace
        const auto b = tok.find_first_not_of(" \t\r");
        const auto e = tok.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : tok.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open dataset file: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        rows.push_back(split_commas(line));
    }
    if (rows.empty()) throw Error(ErrorKind::Io, "dataset file is empty: " + path);
    const std::size_t width = rows[0].size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != width) {
            throw Error(ErrorKind::Io, path + ": line " + std::to_string(i + 1) +
                                           " has a different field count");
        }
    }
    bool labeled = width > 1;
    for (const auto& r : rows) {
        if (!is_bare_integer(r.back())) {
            labeled = false;
            break;
        }
    }
    const std::size_t dim = labeled ? width - 1 : width;
    if (dim == 0) throw Error(ErrorKind::Io, path + ": no feature columns");
    Dataset ds;
    ds.x = Tensor::zeros({rows.size(), dim});
    if (labeled) ds.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
            try {
                ds.x.at(i, d) = std::stod(rows[i][d]);
            } catch (const std::exception&) {
                throw Error(ErrorKind::Io, path + ": line " + std::to_string(i + 1) +
                                               " field " + std::to_string(d + 1) + " is not a number");
            }
        }
        if (labeled) ds.labels[i] = std::stoi(rows[i].back());
    }
    return ds;
}

std::vector<int> load_labels_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open labels file: " + path);
    std::vector<int> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        const std::string tok = line.substr(b, e - b + 1);
        if (!is_bare_integer(tok)) {
            throw Error(ErrorKind::Io,
                        path + ": line " + std::to_string(lineno) + " is not an integer label");
        }
        labels.push_back(std::stoi(tok));
    }
    if (labels.empty()) throw Error(ErrorKind::Io, "labels file is empty: " + path);
    return labels;
}

Tensor reshape_samples(const Tensor& flat, const std::vector<std::size_t>& input_shape) {
    std::size_t sample_len = 1;
    for (auto e : input_shape) sample_len *= e;
    if (flat.rank() != 2 || flat.shape[1] != sample_len) {
        throw Error(ErrorKind::Dimension,
                    "dataset sample length " + std::to_string(flat.rank() == 2 ? flat.shape[1] : 0) +
                        " does not match model input size " + std::to_string(sample_len));
    }
    std::vector<std::size_t> shape;
    shape.push_back(flat.shape[0]);
    shape.insert(shape.end(), input_shape.begin(), input_shape.end());
    return Tensor(std::move(shape), flat.data);
}

}  // namespace entk
