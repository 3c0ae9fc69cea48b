#pragma once

#include <vector>

#include "nhvol/system.hpp"

namespace nhvol {

/// Center of the domain box if admissible, else the first seeded sample.
std::vector<double> reference_point(const Domain& domain);

/// n - m vector fields spanning D, mutually g-orthogonal everywhere and
/// orthonormal at the reference point. Coordinate fields are projected onto D
/// along span{W^a} and orthogonalized in order of largest residual norm at the
/// reference point. Throws DegenerateRealization on rank collapse at a sample.
std::vector<VectorField> adapted_frame(const NonholonomicSystem& sys);
std::vector<VectorField> adapted_frame(const NonholonomicSystem& sys, const Realization& r);

}  // namespace nhvol
