#include "support/oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace taxgrow::testsupport {

namespace {

std::string lower_copy(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string join(const std::vector<std::string>& tokens, int from, int to, char sep) {
    std::string out;
    for (int i = from; i < to; ++i) {
        if (i > from) out.push_back(sep);
        out += tokens[static_cast<std::size_t>(i)];
    }
    return out;
}

} // namespace

std::vector<std::string> oracle_patterns(const std::vector<std::string>& tokens, int start,
                                         int end, bool lowercase) {
    const int len = static_cast<int>(tokens.size());
    const int shapes[6][2] = {{1, 1}, {2, 1}, {1, 2}, {2, 2}, {3, 1}, {1, 3}};
    std::vector<std::string> out;
    for (const auto& shape : shapes) {
        const int l = shape[0];
        const int r = shape[1];
        if (start - l < 0 || end + r > len) continue;
        std::string s = join(tokens, start - l, start, ' ');
        s += " __ ";
        s += join(tokens, end, end + r, ' ');
        if (lowercase) s = lower_copy(s);
        out.push_back(s);
    }
    return out;
}

OracleWorld oracle_ingest(const std::vector<SentenceRecord>& records,
                          const std::vector<std::string>& noun_tags, bool lowercase,
                          const std::vector<TypeRecord>& types,
                          const std::vector<std::pair<TermId, Eigen::VectorXd>>& vectors) {
    OracleWorld world;
    for (const auto& rec : records) {
        // structural validity
        if (rec.pos.size() != rec.tokens.size()) continue;
        bool ok = true;
        for (const auto& span : rec.entities) {
            if (span.start < 0 || span.start >= span.end ||
                span.end > static_cast<int>(rec.tokens.size())) {
                ok = false;
                break;
            }
            if (join(rec.tokens, span.start, span.end, '_') != span.term) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        for (const auto& span : rec.entities) {
            bool noun = false;
            for (int i = span.start; i < span.end && !noun; ++i) {
                for (const auto& tag : noun_tags) {
                    if (rec.pos[static_cast<std::size_t>(i)] == tag) {
                        noun = true;
                        break;
                    }
                }
            }
            if (!noun) continue;
            if (std::find(world.vocab.begin(), world.vocab.end(), span.term) == world.vocab.end())
                world.vocab.push_back(span.term);
            for (const auto& p : oracle_patterns(rec.tokens, span.start, span.end, lowercase)) {
                world.counts[span.term][p] += 1;
                world.totals[p] += 1;
            }
        }
    }
    for (const auto& t : types) {
        if (t.confidence > 0.0) {
            auto& row = world.type_conf[t.term];
            row.emplace(t.type_label, t.confidence); // first record wins
        }
    }
    for (const auto& [term, vec] : vectors) {
        std::vector<double> v(vec.data(), vec.data() + vec.size());
        world.vectors.emplace(term, std::move(v));
    }
    return world;
}

double oracle_skip_weight(const OracleWorld& w, const std::string& term,
                          const std::string& pattern) {
    auto term_it = w.counts.find(term);
    if (term_it == w.counts.end()) return 0.0;
    auto pat_it = term_it->second.find(pattern);
    if (pat_it == term_it->second.end()) return 0.0;
    const double x = static_cast<double>(pat_it->second);
    const double total = static_cast<double>(w.totals.at(pattern));
    const double weight =
        std::log(1.0 + x) * (std::log(static_cast<double>(w.vocab.size())) - std::log(total));
    return std::max(0.0, weight);
}

double oracle_type_weight(const OracleWorld& w, const std::string& term, const std::string& type) {
    auto term_it = w.type_conf.find(term);
    if (term_it == w.type_conf.end()) return 0.0;
    auto ty_it = term_it->second.find(type);
    if (ty_it == term_it->second.end()) return 0.0;
    double total = 0.0;
    for (const auto& [other, row] : w.type_conf) {
        auto it = row.find(type);
        if (it != row.end()) total += it->second;
    }
    const double weight = std::log(1.0 + ty_it->second) *
                          (std::log(static_cast<double>(w.vocab.size())) - std::log(total));
    return std::max(0.0, weight);
}

double oracle_type_similarity(const OracleWorld& w, const std::string& e1, const std::string& e2) {
    std::set<std::string> labels;
    auto collect = [&](const std::string& e) {
        auto it = w.type_conf.find(e);
        if (it == w.type_conf.end()) return;
        for (const auto& [label, c] : it->second) labels.insert(label);
    };
    collect(e1);
    collect(e2);
    double min_sum = 0.0;
    double max_sum = 0.0;
    for (const auto& label : labels) {
        const double w1 = oracle_type_weight(w, e1, label);
        const double w2 = oracle_type_weight(w, e2, label);
        min_sum += std::min(w1, w2);
        max_sum += std::max(w1, w2);
    }
    return max_sum > 0.0 ? min_sum / max_sum : 0.0;
}

double oracle_cosine(const std::vector<double>& u, const std::vector<double>& v) {
    double dot = 0.0;
    double nu = 0.0;
    double nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::optional<double> oracle_emb_cosine(const OracleWorld& w, const std::string& a,
                                        const std::string& b) {
    auto ia = w.vectors.find(a);
    auto ib = w.vectors.find(b);
    if (ia == w.vectors.end() || ib == w.vectors.end()) return std::nullopt;
    return oracle_cosine(ia->second, ib->second);
}

double oracle_sib_sim_sk(const OracleWorld& w, const std::string& e1, const std::string& e2,
                         const std::set<std::string>& sk) {
    double min_sum = 0.0;
    double max_sum = 0.0;
    for (const auto& pattern : sk) {
        const double w1 = oracle_skip_weight(w, e1, pattern);
        const double w2 = oracle_skip_weight(w, e2, pattern);
        min_sum += std::min(w1, w2);
        max_sum += std::max(w1, w2);
    }
    return max_sum > 0.0 ? min_sum / max_sum : 0.0;
}

double oracle_sib_sim(const OracleWorld& w, const std::string& e1, const std::string& e2,
                      const std::set<std::string>& sk) {
    const double emb = std::max(0.0, oracle_emb_cosine(w, e1, e2).value_or(0.0));
    if (emb == 0.0) return 0.0;
    const double sks = oracle_sib_sim_sk(w, e1, e2, sk);
    const double tp = oracle_type_similarity(w, e1, e2);
    return std::sqrt((1.0 + sks) * emb) * std::sqrt(1.0 + tp);
}

std::optional<std::vector<double>> oracle_mean_offset(
    const OracleWorld& w, const std::vector<std::pair<std::string, std::string>>& edges) {
    std::vector<double> sum;
    std::size_t used = 0;
    for (const auto& [parent, child] : edges) {
        auto ip = w.vectors.find(parent);
        auto ic = w.vectors.find(child);
        if (ip == w.vectors.end() || ic == w.vectors.end()) continue;
        if (sum.empty()) sum.assign(ip->second.size(), 0.0);
        for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += ip->second[d] - ic->second[d];
        ++used;
    }
    if (used == 0) return std::nullopt;
    for (auto& v : sum) v /= static_cast<double>(used);
    return sum;
}

std::optional<double> oracle_par_sim(const OracleWorld& w, const std::string& parent,
                                     const std::string& x,
                                     const std::vector<std::pair<std::string, std::string>>& edges) {
    const auto mean = oracle_mean_offset(w, edges);
    if (!mean) return std::nullopt;
    auto ip = w.vectors.find(parent);
    auto ix = w.vectors.find(x);
    if (ip == w.vectors.end() || ix == w.vectors.end()) return std::nullopt;
    std::vector<double> diff(mean->size());
    for (std::size_t d = 0; d < diff.size(); ++d) diff[d] = ip->second[d] - ix->second[d];
    double norm_diff = 0.0;
    double norm_mean = 0.0;
    for (std::size_t d = 0; d < diff.size(); ++d) {
        norm_diff += diff[d] * diff[d];
        norm_mean += (*mean)[d] * (*mean)[d];
    }
    if (norm_diff == 0.0 || norm_mean == 0.0) return std::nullopt;
    return oracle_cosine(diff, *mean);
}

std::vector<std::string> oracle_select_quality(const OracleWorld& w,
                                               const std::vector<std::string>& seeds, int k) {
    std::map<std::string, double> strength;
    for (const auto& seed : seeds) {
        auto it = w.counts.find(seed);
        if (it == w.counts.end()) continue;
        for (const auto& [pattern, x] : it->second) {
            const double weight = oracle_skip_weight(w, seed, pattern);
            if (weight > 0.0) strength[pattern] += weight;
        }
    }
    std::vector<std::pair<std::string, double>> scored(strength.begin(), strength.end());
    std::erase_if(scored, [](const auto& e) { return e.second <= 0.0; });
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (k >= 0 && scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    std::vector<std::string> out;
    out.reserve(scored.size());
    for (const auto& [pattern, s] : scored) out.push_back(pattern);
    return out;
}

double oracle_score(const OracleWorld& w, const std::string& candidate,
                    const std::vector<std::string>& seeds, const std::set<std::string>& sk) {
    double sum = 0.0;
    for (const auto& seed : seeds) sum += oracle_sib_sim(w, candidate, seed, sk);
    return sum / static_cast<double>(seeds.size());
}

std::vector<std::pair<std::string, double>> oracle_width(
    const OracleWorld& w, const std::vector<std::string>& seeds,
    const std::set<std::string>& blacklist, const std::vector<std::set<std::string>>& subsets,
    int rank_threshold, int cap) {
    std::map<std::string, double> reciprocal;
    for (const auto& sk : subsets) {
        std::vector<std::pair<std::string, double>> scored;
        for (const auto& term : w.vocab) {
            if (blacklist.count(term)) continue;
            if (std::find(seeds.begin(), seeds.end(), term) != seeds.end()) continue;
            bool associated = false;
            auto it = w.counts.find(term);
            if (it != w.counts.end()) {
                for (const auto& pattern : sk) {
                    if (it->second.count(pattern)) {
                        associated = true;
                        break;
                    }
                }
            }
            if (!associated) continue;
            const double score = oracle_score(w, term, seeds, sk);
            if (score > 0.0) scored.emplace_back(term, score);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (std::size_t rank = 0; rank < scored.size(); ++rank)
            reciprocal[scored[rank].first] += 1.0 / static_cast<double>(rank + 1);
    }
    std::vector<std::pair<std::string, double>> admitted;
    for (const auto& [term, sum] : reciprocal) {
        const double mrr = sum / static_cast<double>(subsets.size());
        if (mrr > 1.0 / static_cast<double>(rank_threshold)) admitted.emplace_back(term, mrr);
    }
    std::sort(admitted.begin(), admitted.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (cap > 0 && admitted.size() > static_cast<std::size_t>(cap))
        admitted.resize(static_cast<std::size_t>(cap));
    return admitted;
}

double oracle_node_confidence(const OracleWorld& w, const std::string& node,
                              const std::string& parent, const std::vector<std::string>& siblings,
                              const std::vector<std::pair<std::string, std::string>>& ref_edges,
                              int top_features) {
    const auto psim = oracle_par_sim(w, parent, node, ref_edges);
    if (!psim) return 0.0;
    if (siblings.empty()) return std::max(0.0, *psim);
    const auto quality = oracle_select_quality(w, siblings, top_features);
    const std::set<std::string> sk(quality.begin(), quality.end());
    double sum = 0.0;
    for (const auto& sibling : siblings) sum += oracle_sib_sim(w, node, sibling, sk);
    const double conf = sum / static_cast<double>(siblings.size()) * (*psim);
    return std::max(0.0, conf);
}

double oracle_objective(const Eigen::MatrixXd& W, const Eigen::MatrixXd& Yc_norm,
                        const Eigen::MatrixXd& Ys, double mu1, double mu2,
                        const Eigen::MatrixXd& F) {
    const Eigen::Index n = W.rows();
    const Eigen::VectorXd d = W.rowwise().sum();
    double graph = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (W(i, j) == 0.0) continue;
            const Eigen::RowVectorXd diff =
                F.row(i) / std::sqrt(d[i]) - F.row(j) / std::sqrt(d[j]);
            graph += W(i, j) * diff.squaredNorm();
        }
    }
    const double fit_c = (F - Yc_norm).squaredNorm();
    const double fit_s = (F - Ys).squaredNorm();
    return graph + mu1 * fit_c + mu2 * fit_s;
}

Eigen::MatrixXd oracle_fd_gradient(const Eigen::MatrixXd& W, const Eigen::MatrixXd& Yc_norm,
                                   const Eigen::MatrixXd& Ys, double mu1, double mu2,
                                   const Eigen::MatrixXd& F, double h) {
    Eigen::MatrixXd grad(F.rows(), F.cols());
    Eigen::MatrixXd probe = F;
    for (Eigen::Index i = 0; i < F.rows(); ++i) {
        for (Eigen::Index j = 0; j < F.cols(); ++j) {
            const double step = h * std::max(1.0, std::abs(F(i, j)));
            probe(i, j) = F(i, j) + step;
            const double up = oracle_objective(W, Yc_norm, Ys, mu1, mu2, probe);
            probe(i, j) = F(i, j) - step;
            const double down = oracle_objective(W, Yc_norm, Ys, mu1, mu2, probe);
            probe(i, j) = F(i, j);
            grad(i, j) = (up - down) / (2.0 * step);
        }
    }
    return grad;
}

ToyInstance random_toy(std::mt19937_64& rng, const ToyOptions& opts) {
    ToyInstance toy;
    auto draw = [&](std::uint64_t n) { return rng() % n; };
    auto chance = [&](double p) {
        return static_cast<double>(rng() % 1000000) / 1000000.0 < p;
    };

    for (int t = 0; t < opts.terms; ++t) {
        if (chance(0.3)) {
            toy.terms.push_back("aa" + std::to_string(t) + "_bb" + std::to_string(t));
        } else {
            toy.terms.push_back("term" + std::to_string(t));
        }
    }
    const std::vector<std::string> fillers = {"the", "of", "in",  "was", "big",  "small",
                                              "wx",  "yz", "qq",  "and", "near", "over",
                                              "pp",  "rr", "sss", "tt"};
    const std::vector<std::string> type_pool = {"alpha", "beta", "gamma", "delta"};

    for (int s = 0; s < opts.sentences; ++s) {
        SentenceRecord rec;
        const int len = 5 + static_cast<int>(draw(6));
        for (int i = 0; i < len; ++i) {
            rec.tokens.push_back(fillers[draw(fillers.size())]);
            rec.pos.push_back("DT");
        }
        const int entity_count = 1 + static_cast<int>(draw(2));
        int cursor = static_cast<int>(draw(2));
        for (int e = 0; e < entity_count && cursor < len; ++e) {
            const auto& term = toy.terms[draw(toy.terms.size())];
            // split a multi-gram term back into its tokens
            std::vector<std::string> parts;
            std::string part;
            for (char c : term) {
                if (c == '_') {
                    parts.push_back(part);
                    part.clear();
                } else {
                    part.push_back(c);
                }
            }
            parts.push_back(part);
            if (cursor + static_cast<int>(parts.size()) > len) break;
            const bool verb_occurrence = chance(opts.verb_prob);
            for (std::size_t i = 0; i < parts.size(); ++i) {
                rec.tokens[static_cast<std::size_t>(cursor) + i] = parts[i];
                rec.pos[static_cast<std::size_t>(cursor) + i] = verb_occurrence ? "VB" : "NN";
            }
            rec.entities.push_back(
                {cursor, cursor + static_cast<int>(parts.size()), term});
            cursor += static_cast<int>(parts.size()) + 1 + static_cast<int>(draw(2));
        }
        if (!rec.entities.empty()) toy.records.push_back(std::move(rec));
    }

    for (const auto& term : toy.terms) {
        if (chance(opts.type_prob)) {
            const std::size_t k = 1 + draw(type_pool.size());
            for (std::size_t i = 0; i < k; ++i) {
                const double conf = 0.2 + static_cast<double>(draw(400)) / 100.0;
                toy.types.push_back({term, type_pool[(draw(type_pool.size()) + i) % type_pool.size()],
                                     conf});
            }
        }
        if (chance(opts.embedding_prob)) {
            Eigen::VectorXd v(opts.dim);
            for (int d = 0; d < opts.dim; ++d)
                v[d] = -1.0 + 2.0 * static_cast<double>(draw(10000)) / 10000.0;
            if (v.norm() == 0.0) v[0] = 1.0;
            toy.vectors.emplace_back(term, v);
        }
    }
    return toy;
}

bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace taxgrow::testsupport
