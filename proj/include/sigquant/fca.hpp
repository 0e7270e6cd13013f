#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sigquant/evaluate.hpp"

namespace sigquant {
namespace fca {

// Binary incidence between objects (classifiers) and attributes
// (fine-tuned AE signals). Bounded at 32 of each; contexts here are tiny.
struct FormalContext {
    std::vector<std::string> objects;
    std::vector<std::string> attributes;
    std::vector<std::uint32_t> incidence;  // per object, bitmask over attributes

    FormalContext() = default;
    FormalContext(std::vector<std::string> g, std::vector<std::string> m);

    std::size_t object_count() const { return objects.size(); }
    std::size_t attribute_count() const { return attributes.size(); }
    std::uint32_t full_objects() const {
        return objects.size() == 32 ? 0xffffffffu : ((1u << objects.size()) - 1u);
    }
    std::uint32_t full_attributes() const {
        return attributes.size() == 32 ? 0xffffffffu : ((1u << attributes.size()) - 1u);
    }
    bool has(std::size_t g, std::size_t m) const { return (incidence[g] >> m) & 1u; }
    void set(std::size_t g, std::size_t m, bool v = true);

    void to_csv(std::ostream& os) const;
    void save_csv(const std::string& path) const;
};

// Extent/intent pair closed under both derivation operators.
struct FormalConcept {
    std::uint32_t extent = 0;  // objects
    std::uint32_t intent = 0;  // attributes
    bool operator==(const FormalConcept& o) const {
        return extent == o.extent && intent == o.intent;
    }
    bool operator<(const FormalConcept& o) const {
        return extent != o.extent ? extent < o.extent : intent < o.intent;
    }
};

// Attributes shared by every object in A; prime of the empty set is M.
std::uint32_t object_prime(const FormalContext& ctx, std::uint32_t objects);
// Objects having every attribute in B; prime of the empty set is G.
std::uint32_t attribute_prime(const FormalContext& ctx, std::uint32_t attributes);

// All formal concepts, via closure of every attribute subset.
std::vector<FormalConcept> enumerate_concepts(const FormalContext& ctx);

struct ConceptLattice {
    FormalContext context;
    std::vector<FormalConcept> concepts;            // sorted: extent size, then bit value
    std::vector<std::pair<int, int>> cover_edges;   // (lower, upper) covering pairs only
    int top = -1;     // extent == G
    int bottom = -1;  // intent == M
    std::vector<std::vector<std::string>> object_labels;     // reduced labeling
    std::vector<std::vector<std::string>> attribute_labels;
};

ConceptLattice build_lattice(const FormalContext& ctx);
ConceptLattice build_lattice(const FormalContext& ctx, std::vector<FormalConcept> concepts);

// True iff the covering relation forms a single chain.
bool is_total_order(const ConceptLattice& lattice);

// Hasse diagram as a DOT digraph; objects rendered above, attributes below
// each node; byte-deterministic for identical lattices.
std::string export_dot(const ConceptLattice& lattice);

// I = {(classifier j, AE_i) : RRC(A_i -> j) >= t}; undefined entries are
// treated as absent.
FormalContext threshold_context(const eval::RRCMatrix& rrc, double t);

}  // namespace fca
}  // namespace sigquant
