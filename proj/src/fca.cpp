#include "sigquant/fca.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sigquant {
namespace fca {

namespace {

void check_keys(const std::vector<std::string>& keys, const char* what) {
    if (keys.empty()) throw std::invalid_argument(std::string("FormalContext: empty ") + what);
    if (keys.size() > 32)
        throw std::invalid_argument(std::string("FormalContext: more than 32 ") + what);
    std::set<std::string> uniq(keys.begin(), keys.end());
    if (uniq.size() != keys.size())
        throw std::invalid_argument(std::string("FormalContext: duplicate ") + what);
}

}  // namespace

FormalContext::FormalContext(std::vector<std::string> g, std::vector<std::string> m)
    : objects(std::move(g)), attributes(std::move(m)) {
    check_keys(objects, "objects");
    check_keys(attributes, "attributes");
    incidence.assign(objects.size(), 0u);
}

void FormalContext::set(std::size_t g, std::size_t m, bool v) {
    if (v) incidence[g] |= (1u << m);
    else incidence[g] &= ~(1u << m);
}

void FormalContext::to_csv(std::ostream& os) const {
    os << "object";
    for (const auto& a : attributes) os << "," << a;
    os << "\n";
    for (std::size_t g = 0; g < objects.size(); ++g) {
        os << objects[g];
        for (std::size_t m = 0; m < attributes.size(); ++m) os << "," << (has(g, m) ? 1 : 0);
        os << "\n";
    }
}

void FormalContext::save_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write context: " + path);
    to_csv(f);
}

std::uint32_t object_prime(const FormalContext& ctx, std::uint32_t objects) {
    std::uint32_t shared = ctx.full_attributes();
    for (std::size_t g = 0; g < ctx.object_count(); ++g)
        if ((objects >> g) & 1u) shared &= ctx.incidence[g];
    return shared;
}

std::uint32_t attribute_prime(const FormalContext& ctx, std::uint32_t attributes) {
    std::uint32_t out = 0;
    for (std::size_t g = 0; g < ctx.object_count(); ++g)
        if ((ctx.incidence[g] & attributes) == attributes) out |= (1u << g);
    return out;
}

std::vector<FormalConcept> enumerate_concepts(const FormalContext& ctx) {
    std::set<FormalConcept> found;
    const std::size_t m = ctx.attribute_count();
    for (std::uint32_t b = 0;; ++b) {
        const std::uint32_t extent = attribute_prime(ctx, b);
        const std::uint32_t intent = object_prime(ctx, extent);
        found.insert({extent, intent});
        if (b == (m == 32 ? 0xffffffffu : (1u << m) - 1u)) break;
    }
    return {found.begin(), found.end()};
}

ConceptLattice build_lattice(const FormalContext& ctx) {
    return build_lattice(ctx, enumerate_concepts(ctx));
}

ConceptLattice build_lattice(const FormalContext& ctx, std::vector<FormalConcept> concepts) {
    ConceptLattice lat;
    lat.context = ctx;
    std::sort(concepts.begin(), concepts.end(), [](const FormalConcept& a, const FormalConcept& b) {
        const int pa = std::popcount(a.extent), pb = std::popcount(b.extent);
        if (pa != pb) return pa < pb;
        return a.extent != b.extent ? a.extent < b.extent : a.intent < b.intent;
    });
    lat.concepts = std::move(concepts);
    const int n = static_cast<int>(lat.concepts.size());

    auto leq = [&](int a, int b) {  // extent inclusion
        return (lat.concepts[a].extent & ~lat.concepts[b].extent) == 0;
    };
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (a == b || !leq(a, b) || leq(b, a)) continue;
            bool covering = true;
            for (int c = 0; c < n && covering; ++c) {
                if (c == a || c == b) continue;
                if (leq(a, c) && !leq(c, a) && leq(c, b) && !leq(b, c)) covering = false;
            }
            if (covering) lat.cover_edges.emplace_back(a, b);
        }
    std::sort(lat.cover_edges.begin(), lat.cover_edges.end());

    for (int i = 0; i < n; ++i) {
        if (lat.concepts[i].extent == ctx.full_objects()) lat.top = i;
        if (lat.concepts[i].intent == ctx.full_attributes()) lat.bottom = i;
    }

    // Reduced labeling: each object at its object-concept, each attribute at
    // its attribute-concept.
    lat.object_labels.assign(n, {});
    lat.attribute_labels.assign(n, {});
    auto find_concept = [&](std::uint32_t extent, std::uint32_t intent) {
        for (int i = 0; i < n; ++i)
            if (lat.concepts[i].extent == extent && lat.concepts[i].intent == intent) return i;
        throw std::logic_error("labeling: closure not among concepts");
    };
    for (std::size_t g = 0; g < ctx.object_count(); ++g) {
        const std::uint32_t intent = object_prime(ctx, 1u << g);
        const std::uint32_t extent = attribute_prime(ctx, intent);
        lat.object_labels[find_concept(extent, intent)].push_back(ctx.objects[g]);
    }
    for (std::size_t m = 0; m < ctx.attribute_count(); ++m) {
        const std::uint32_t extent = attribute_prime(ctx, 1u << m);
        const std::uint32_t intent = object_prime(ctx, extent);
        lat.attribute_labels[find_concept(extent, intent)].push_back(ctx.attributes[m]);
    }
    return lat;
}

bool is_total_order(const ConceptLattice& lattice) {
    const int n = static_cast<int>(lattice.concepts.size());
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            const bool ab = (lattice.concepts[a].extent & ~lattice.concepts[b].extent) == 0;
            const bool ba = (lattice.concepts[b].extent & ~lattice.concepts[a].extent) == 0;
            if (!ab && !ba) return false;
        }
    return true;
}

std::string export_dot(const ConceptLattice& lattice) {
    std::ostringstream os;
    os << "digraph concept_lattice {\n";
    os << "  rankdir=BT;\n";
    os << "  node [shape=record, fontsize=10];\n";
    for (std::size_t i = 0; i < lattice.concepts.size(); ++i) {
        std::string objs, attrs;
        for (const auto& o : lattice.object_labels[i]) {
            if (!objs.empty()) objs += " ";
            objs += o;
        }
        for (const auto& a : lattice.attribute_labels[i]) {
            if (!attrs.empty()) attrs += " ";
            attrs += a;
        }
        // objects in the upper field, attributes in the lower field
        os << "  n" << i << " [label=\"{" << objs << "|" << attrs << "}\"];\n";
    }
    for (const auto& [lo, hi] : lattice.cover_edges)
        os << "  n" << lo << " -> n" << hi << ";\n";
    os << "}\n";
    return os.str();
}

FormalContext threshold_context(const eval::RRCMatrix& rrc, double t) {
    FormalContext ctx(rrc.cols, rrc.rows);
    for (std::size_t g = 0; g < rrc.cols.size(); ++g)          // objects: classifiers
        for (std::size_t m = 0; m < rrc.rows.size(); ++m)      // attributes: AEs
            if (rrc.defined[m][g] && rrc.values[m][g] >= t) ctx.set(g, m);
    return ctx;
}

}  // namespace fca
}  // namespace sigquant
