#pragma once

#include <string>
#include <vector>

#include "blockforge/env.hpp"
#include "blockforge/features.hpp"

namespace blockforge {

struct SvgOptions {
  double scale = 40.0;  // pixels per world unit
  std::string title;
};

// Construction space with obstacles (grey squares), targets (red points) and
// the assembly's blocks; `highlight` placements are drawn dashed.
std::string render_assembly_svg(const Task& task, const Assembly& assembly,
                                const std::vector<Placement>& highlight = {}, const SvgOptions& options = {});

// One row of the five-panel successor-feature figure.
struct PsiPanelRow {
  int step = 0;
  FeatureImage state;      // psi(S)
  FeatureImage action;     // phi(A) of the chosen action
  FeatureImage obstacles;  // obstacle channel of xi(T)
  FeatureImage reward;     // rho(T)
  FeatureImage psi;        // predicted Psi(S, A, T)
};

// Rows of [state | action | obstacles | reward | Psi]. Every panel is a
// <g> with id "panel-<name>-<step>"; zero pixels of the binary panels are
// left blank and the Psi panel is annotated with its min and max.
std::string render_psi_panels_svg(const std::vector<PsiPanelRow>& rows, const std::string& title = {});

}  // namespace blockforge
