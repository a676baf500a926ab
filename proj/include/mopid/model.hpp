#ifndef MOPID_MODEL_HPP
#define MOPID_MODEL_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mopid/distributions.hpp"
#include "mopid/potentials.hpp"

namespace mopid {

// ---------------------------------------------------------------------------
// Variables
// ---------------------------------------------------------------------------

enum class VarKind {
  ChanceDiscrete,
  ChanceContinuous,
  ChanceDeterministic,  // continuous chance whose conditional is an equation
  DecisionDiscrete,
  DecisionContinuous,
};

bool kind_is_chance(VarKind k);
bool kind_is_decision(VarKind k);
bool kind_is_discrete(VarKind k);  // finite state list vs. interval domain
const char* kind_name(VarKind k);
std::optional<VarKind> kind_from_name(const std::string& s);

// Feasibility table for a discrete decision, as declared: for each
// configuration of the (discrete, previously observed) predecessors, the
// subset of the decision's states that may be chosen.
struct ConstraintDecl {
  struct Row {
    std::vector<std::string> when;   // one state label per predecessor
    std::vector<std::string> allow;  // non-empty subset of the decision's states
    bool operator==(const Row&) const = default;
  };
  std::vector<std::string> predecessors;
  std::vector<Row> rows;
  bool operator==(const ConstraintDecl&) const = default;
};

struct Variable {
  std::string name;
  VarKind kind = VarKind::ChanceContinuous;
  VarId id = -1;                    // index into InfluenceDiagram::variables
  std::vector<std::string> states;  // discrete kinds
  Interval domain{0.0, 0.0};        // continuous kinds
  bool log_scale = false;  // value is the log of the reported quantity
  std::optional<ConstraintDecl> constraint;  // discrete decisions only
  bool operator==(const Variable&) const = default;

  int state_index(const std::string& label) const;  // -1 if unknown
};

// ---------------------------------------------------------------------------
// Declarative potential payloads (the file-level form, kept verbatim so the
// diagram can be re-serialized, compared structurally, and sampled from)
// ---------------------------------------------------------------------------

// A univariate piecewise Taylor expansion of a named curve from the
// distributions registry, anchored at the listed centers.
struct CurveDecl {
  std::string family;
  std::vector<double> params;
  std::string of;  // argument variable
  std::vector<Interval> intervals;
  std::vector<double> centers;
  int degree = 3;
  bool operator==(const CurveDecl&) const = default;
};

// One literal piece: per-variable bounds (missing variable = unbounded),
// per-variable anchors (missing = 0), and coefficients keyed by monomial
// strings ("1", "X", "X^2 Y") in offsets from the anchors.
struct PieceDecl {
  std::vector<std::pair<std::string, Interval>> intervals;
  std::vector<std::pair<std::string, double>> anchors;
  std::vector<std::pair<std::string, double>> coeffs;
  bool operator==(const PieceDecl&) const = default;
};

// A declared piecewise-polynomial function, in exactly one of five forms.
struct MopDecl {
  enum class Form { Zero, Constant, Expr, Pieces, Curve };
  Form form = Form::Zero;
  double constant = 0.0;
  std::string expr;  // value-space polynomial over variable names
  std::vector<std::pair<std::string, Interval>> expr_intervals;  // optional bounds
  std::vector<PieceDecl> pieces;
  std::optional<CurveDecl> curve;
  bool operator==(const MopDecl&) const = default;
};

struct DiracDecl {
  double weight = 1.0;
  MopDecl g;  // the constrained value, a function of the parents
  bool operator==(const DiracDecl&) const = default;
};

// A closed-form marginal density, expanded by the distributions module at
// load time.  The truncation halfwidth must be declared in the file.
struct DensityDecl {
  std::string family;  // standard-normal | normal | lognormal
  double mean = 0.0;
  double variance = 1.0;
  double halfwidth = 0.0;
  int pieces = 6;
  int degree = 3;
  bool operator==(const DensityDecl&) const = default;
};

// Body of one case: exactly one payload.
struct BodyDecl {
  enum class Payload { None, Density, Dirac, Mop, Probs, Value };
  Payload payload = Payload::None;
  std::optional<DensityDecl> density;
  std::vector<DiracDecl> diracs;
  std::optional<MopDecl> mop;
  std::vector<double> probs;  // over the owning variable's states
  double value = 0.0;         // constant utility
  bool operator==(const BodyDecl&) const = default;
};

// One row of a case table: the discrete-parent state labels it applies to
// (empty when there is no discrete context) and the body.
struct CaseDecl {
  std::vector<std::string> when;
  BodyDecl body;
  bool operator==(const CaseDecl&) const = default;
};

struct PotentialDecl {
  std::string variable;            // the owning chance variable
  std::vector<std::string> given;  // parents, as declared
  std::vector<CaseDecl> cases;     // one row with empty `when` if uncased
  bool operator==(const PotentialDecl&) const = default;
};

struct UtilityDecl {
  std::string name;
  std::vector<std::string> domain;
  std::vector<CaseDecl> cases;
  bool operator==(const UtilityDecl&) const = default;
};

// ---------------------------------------------------------------------------
// The diagram
// ---------------------------------------------------------------------------

class InfluenceDiagram {
 public:
  std::string name;
  std::vector<Variable> variables;  // declaration order; id == index
  std::vector<PotentialDecl> potential_decls;
  std::vector<UtilityDecl> utility_decls;
  std::vector<std::string> information;  // total order: decisions + observed chance

  // Built during validation, aligned with the decl lists.
  std::vector<Potential> chance_potentials;
  std::vector<Potential> utility_potentials;
  std::map<VarId, DecisionConstraint> constraints;  // resolved feasibility tables

  const Variable* find(const std::string& name) const;
  const Variable& var(VarId id) const { return variables.at(static_cast<std::size_t>(id)); }
  VarId id_of(const std::string& name) const;  // -1 if unknown
  std::vector<VarId> information_ids() const;
  // Position in the information sequence; empty for unobserved variables.
  std::optional<int> info_position(VarId v) const;
  // Declared parents of a chance variable (empty for decisions).
  std::vector<VarId> parents(VarId v) const;
  const PotentialDecl* decl_for(VarId v) const;
  const Potential* potential_for(VarId v) const;
  ChanceClasses chance_classes() const;
};

// ---------------------------------------------------------------------------
// Parsing, validation, serialization
// ---------------------------------------------------------------------------

struct Diagnostic {
  int line = 0;  // 1-based; 0 when no location applies
  int column = 0;
  std::string message;
  std::string render() const;
};

struct ParseResult {
  std::optional<InfluenceDiagram> diagram;  // engaged iff errors is empty
  std::vector<Diagnostic> errors;
  bool ok() const { return errors.empty(); }
};

// Parses and fully validates a diagram file.  On failure the result carries
// every structural error found, each with its location.
ParseResult parse_diagram(const std::string& text);

// Canonical text form: variables alphabetical, potentials ordered by owning
// variable, pieces by lower bound, 17-significant-digit numbers.  Parsing the
// output reproduces the diagram up to canonical ordering.
std::string serialize_diagram(const InfluenceDiagram& id);

// Structural equality modulo canonical ordering (variable order, case order,
// piece order); built potentials are not compared, only declarations.
bool diagrams_equal(const InfluenceDiagram& a, const InfluenceDiagram& b);

// ---------------------------------------------------------------------------
// Elimination planning
// ---------------------------------------------------------------------------

struct PlanStep {
  VarId var = -1;
  std::string name;
  std::vector<std::string> fused;  // labels of the pool items combined here
};

struct EliminationPlan {
  std::vector<PlanStep> steps;
  std::vector<std::string> order_names() const;
};

// Derives (or validates) an elimination order compatible with the information
// sequence and annotates each step with the potentials fused there.
//
// `requested`, when given, lists variable names in elimination order.  It must
// contain every decision and every observed variable; unobserved chance
// variables may be omitted and are spliced in automatically (each right
// before the first decision whose maximization needs it gone).  Throws
// AlgebraError naming the violating pair when the order breaks an information
// constraint (an observed variable removed while a later-informed variable
// remains, or a decision maximized while an unobserved variable is still in
// its fused scope).
EliminationPlan plan_elimination(const InfluenceDiagram& id,
                                 const std::vector<std::string>* requested = nullptr);

// ---------------------------------------------------------------------------
// Ground truth for samplers
// ---------------------------------------------------------------------------

// How a chance variable is drawn/evaluated by reference implementations.  The
// declared model is the ground truth: closed-form densities are sampled
// exactly (untruncated), everything else evaluates the expanded declarations.
struct TrueConditional {
  enum class Kind {
    NormalDensity,  // exact N(mean, variance) in the variable's value space
    DiscreteTable,  // categorical rows from the built potential
    MopDensity,     // the built piecewise density is the distribution itself
    Deterministic,  // value = weight-1 point-mass relation g(parents)
  };
  Kind kind = Kind::Deterministic;
  double mean = 0.0;
  double variance = 1.0;
};

TrueConditional true_conditional(const InfluenceDiagram& id, VarId X);

}  // namespace mopid

#endif  // MOPID_MODEL_HPP
