#include "toothseg/geometry.hpp"

namespace toothseg {

RigidTransform RigidTransform::about_x(double angle_deg, const Vec3& pivot) {
    const double a = angle_deg * M_PI / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    RigidTransform t;
    t.rotation = {1, 0, 0, 0, c, -s, 0, s, c};
    // translation so that the pivot is a fixed point
    const Vec3 rp{pivot.x, c * pivot.y - s * pivot.z, s * pivot.y + c * pivot.z};
    t.translation = pivot - rp;
    return t;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    // transpose of an orthonormal matrix is its inverse
    inv.rotation = {rotation[0], rotation[3], rotation[6], rotation[1], rotation[4],
                    rotation[7], rotation[2], rotation[5], rotation[8]};
    const Vec3 t = translation;
    inv.translation = {-(inv.rotation[0] * t.x + inv.rotation[1] * t.y + inv.rotation[2] * t.z),
                       -(inv.rotation[3] * t.x + inv.rotation[4] * t.y + inv.rotation[5] * t.z),
                       -(inv.rotation[6] * t.x + inv.rotation[7] * t.y + inv.rotation[8] * t.z)};
    return inv;
}

RigidTransform RigidTransform::then(const RigidTransform& next) const {
    RigidTransform out;
    const auto& a = next.rotation;
    const auto& b = rotation;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            out.rotation[3 * r + c] =
                a[3 * r + 0] * b[0 + c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c];
    out.translation = next.apply(translation);
    return out;
}

void RigidTransform::validate() const {
    const auto& m = rotation;
    auto col = [&](int c) { return Vec3{m[c], m[3 + c], m[6 + c]}; };
    for (int c = 0; c < 3; ++c) {
        if (std::abs(col(c).norm() - 1.0) > 1e-9)
            throw std::invalid_argument("rigid transform: column " + std::to_string(c) +
                                        " is not unit length");
        for (int d = c + 1; d < 3; ++d)
            if (std::abs(col(c).dot(col(d))) > 1e-9)
                throw std::invalid_argument("rigid transform: columns not orthogonal");
    }
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    if (std::abs(det - 1.0) > 1e-9)
        throw std::invalid_argument("rigid transform: determinant is not +1");
}

}  // namespace toothseg
