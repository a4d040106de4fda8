// Copyright 2026 The NMOE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Planar rigid-body dynamics over a generic scalar.
//
// A ChainSpec is expanded into single-coordinate bodies (a planar joint
// becomes x-slider, z-slider and hinge, the first two massless), so body i
// owns coordinate i. Spatial quantities are planar 3-vectors (w, vx, vz)
// expressed in world coordinates about the world origin, which lets the
// composite-rigid-body and Newton-Euler recursions run without frame
// transforms.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "nmoe/diffcore/jet.hpp"
#include "nmoe/error.hpp"
#include "nmoe/rbd/chain_spec.hpp"
#include "nmoe/rbd/linalg.hpp"

namespace nmoe::rbd {

template <class T>
using Spatial = std::array<T, 3>;

template <class T>
struct Body {
  int parent = -1;
  bool revolute = true;
  T offset_x{0.0}, offset_z{0.0};
  double angle = 0.0;
  double axis_x = 1.0, axis_z = 0.0;
  T mass{0.0}, inertia{0.0};
  T com_x{0.0}, com_z{0.0};
};

template <class T>
struct ContactPoint {
  int body = 0;
  T local_x{0.0}, local_z{0.0};
};

// A ChainSpec with concrete (possibly differentiable) physical values.
template <class T>
struct Model {
  std::vector<Body<T>> bodies;
  std::vector<int> link_body;  // last expanded body of each link
  std::vector<T> link_length;
  std::vector<int> actuated;   // coordinate index of each actuator
  std::vector<ContactPoint<T>> contacts;
  double gravity_x = 0.0, gravity_z = -9.81;

  int dofs() const { return static_cast<int>(bodies.size()); }
  int actuators() const { return static_cast<int>(actuated.size()); }
};

// Builds a model with the given per-link masses and lengths; COM and inertia
// defaults that depend on length follow the overridden value.
template <class T>
Model<T> instantiate(const ChainSpec& spec, std::span<const T> masses,
                     std::span<const T> lengths) {
  const std::size_t nl = spec.links.size();
  if (masses.size() != nl || lengths.size() != nl) {
    throw ShapeError("instantiate: need one mass and one length per link");
  }
  Model<T> m;
  m.gravity_x = spec.gravity[0];
  m.gravity_z = spec.gravity[1];
  m.link_length.assign(lengths.begin(), lengths.end());
  m.link_body.resize(nl);
  for (std::size_t li = 0; li < nl; ++li) {
    const JointSpec& j = spec.joints[li];
    const LinkSpec& l = spec.links[li];
    const int parent_body = j.parent < 0 ? -1 : m.link_body[j.parent];
    T ox(j.offset[0]), oz(j.offset[1]);
    if (j.at_parent_tip) ox = ox + lengths[j.parent];

    Body<T> massive;
    massive.mass = masses[li];
    if (l.com) {
      massive.com_x = T((*l.com)[0]);
      massive.com_z = T((*l.com)[1]);
    } else {
      massive.com_x = lengths[li] * 0.5;
      massive.com_z = T(0.0);
    }
    // an explicit inertia is taken at the nominal mass and scales with it
    massive.inertia = l.inertia ? masses[li] * (*l.inertia / l.mass)
                                : masses[li] * lengths[li] * lengths[li] / 12.0;

    if (j.type == JointType::kPlanar) {
      Body<T> sx, sz;
      sx.parent = parent_body;
      sx.revolute = false;
      sx.offset_x = ox;
      sx.offset_z = oz;
      sx.axis_x = 1.0;
      sx.axis_z = 0.0;
      m.bodies.push_back(sx);
      sz.parent = static_cast<int>(m.bodies.size()) - 1;
      sz.revolute = false;
      sz.axis_x = 0.0;
      sz.axis_z = 1.0;
      m.bodies.push_back(sz);
      massive.parent = static_cast<int>(m.bodies.size()) - 1;
      massive.revolute = true;
      massive.angle = j.angle;
    } else {
      massive.parent = parent_body;
      massive.revolute = j.type == JointType::kRevolute;
      massive.offset_x = ox;
      massive.offset_z = oz;
      massive.angle = j.angle;
      const double norm = std::hypot(j.axis[0], j.axis[1]);
      massive.axis_x = j.axis[0] / norm;
      massive.axis_z = j.axis[1] / norm;
    }
    m.bodies.push_back(massive);
    m.link_body[li] = static_cast<int>(m.bodies.size()) - 1;
  }
  for (int i = 0; i < static_cast<int>(spec.actuated.size()); ++i) {
    if (spec.actuated[i]) m.actuated.push_back(i);
  }
  for (const auto& c : spec.contacts) {
    ContactPoint<T> cp;
    cp.body = m.link_body[c.link];
    cp.local_x = T(c.offset[0]);
    cp.local_z = T(c.offset[1]);
    if (c.at_tip) cp.local_x = cp.local_x + lengths[c.link];
    m.contacts.push_back(cp);
  }
  return m;
}

// Model with the nominal values of the specification.
inline Model<double> instantiate(const ChainSpec& spec) {
  std::vector<double> masses, lengths;
  for (const auto& l : spec.links) {
    masses.push_back(l.mass);
    lengths.push_back(l.length);
  }
  return instantiate<double>(spec, masses, lengths);
}

template <class T>
struct ChainState {
  Vec<T> q;
  Vec<T> qd;
};

// Per-body positions, motion subspaces, velocities and velocity-product
// accelerations for one (q, qd).
template <class T>
struct Kinematics {
  std::vector<T> px, pz, phi;
  std::vector<Spatial<T>> S;
  std::vector<Spatial<T>> v;
  std::vector<Spatial<T>> c;
};

template <class T>
struct PlanarPoint {
  T x{0.0}, z{0.0}, angle{0.0};
};

namespace detail {

template <class T>
void check_dims(const Model<T>& m, const Vec<T>& q, const Vec<T>* qd) {
  if (static_cast<int>(q.size()) != m.dofs() ||
      (qd != nullptr && static_cast<int>(qd->size()) != m.dofs())) {
    throw ShapeError("state dimension does not match chain (" +
                     std::to_string(m.dofs()) + " coordinates)");
  }
}

// v1 x v2 for motion vectors.
template <class T>
Spatial<T> cross_motion(const Spatial<T>& a, const Spatial<T>& b) {
  return {T(0.0), b[0] * a[2] - a[0] * b[2], a[0] * b[1] - b[0] * a[1]};
}

// v x* f for a force vector f = (moment, fx, fz).
template <class T>
Spatial<T> cross_force(const Spatial<T>& v, const Spatial<T>& f) {
  return {v[1] * f[2] - v[2] * f[1], -v[0] * f[2], v[0] * f[1]};
}

template <class T>
T dot(const Spatial<T>& a, const Spatial<T>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// World-frame spatial inertia about the world origin.
template <class T>
struct Inertia {
  T i00{0.0}, i01{0.0}, i02{0.0}, mass{0.0};

  Spatial<T> apply(const Spatial<T>& u) const {
    return {i00 * u[0] + i01 * u[1] + i02 * u[2], i01 * u[0] + mass * u[1],
            i02 * u[0] + mass * u[2]};
  }
  Inertia& operator+=(const Inertia& o) {
    i00 += o.i00;
    i01 += o.i01;
    i02 += o.i02;
    mass += o.mass;
    return *this;
  }
};

template <class T>
void com_world(const Body<T>& b, const T& px, const T& pz, const T& phi,
               T& cx, T& cz) {
  using std::cos;
  using std::sin;
  const T cs = cos(phi), sn = sin(phi);
  cx = px + cs * b.com_x - sn * b.com_z;
  cz = pz + sn * b.com_x + cs * b.com_z;
}

template <class T>
Inertia<T> body_inertia(const Body<T>& b, const Kinematics<T>& k, int i) {
  T cx, cz;
  com_world(b, k.px[i], k.pz[i], k.phi[i], cx, cz);
  Inertia<T> I;
  I.i00 = b.inertia + b.mass * (cx * cx + cz * cz);
  I.i01 = -(b.mass * cz);
  I.i02 = b.mass * cx;
  I.mass = b.mass;
  return I;
}

}  // namespace detail

template <class T>
Kinematics<T> kinematics(const Model<T>& m, const Vec<T>& q,
                         const Vec<T>& qd) {
  using std::cos;
  using std::sin;
  detail::check_dims(m, q, &qd);
  const int n = m.dofs();
  Kinematics<T> k;
  k.px.resize(n);
  k.pz.resize(n);
  k.phi.resize(n);
  k.S.resize(n);
  k.v.resize(n);
  k.c.resize(n);
  for (int i = 0; i < n; ++i) {
    const Body<T>& b = m.bodies[i];
    T ppx(0.0), ppz(0.0), pphi(0.0);
    Spatial<T> pv{T(0.0), T(0.0), T(0.0)}, pc{T(0.0), T(0.0), T(0.0)};
    if (b.parent >= 0) {
      ppx = k.px[b.parent];
      ppz = k.pz[b.parent];
      pphi = k.phi[b.parent];
      pv = k.v[b.parent];
      pc = k.c[b.parent];
    }
    const T cs = cos(pphi), sn = sin(pphi);
    const T jx = ppx + cs * b.offset_x - sn * b.offset_z;
    const T jz = ppz + sn * b.offset_x + cs * b.offset_z;
    const T jangle = pphi + b.angle;
    if (b.revolute) {
      k.px[i] = jx;
      k.pz[i] = jz;
      k.phi[i] = jangle + q[i];
      k.S[i] = {T(1.0), jz, -jx};
    } else {
      const T ca = cos(jangle), sa = sin(jangle);
      const T ax = ca * b.axis_x - sa * b.axis_z;
      const T az = sa * b.axis_x + ca * b.axis_z;
      k.px[i] = jx + ax * q[i];
      k.pz[i] = jz + az * q[i];
      k.phi[i] = jangle;
      k.S[i] = {T(0.0), ax, az};
    }
    for (int r = 0; r < 3; ++r) k.v[i][r] = pv[r] + k.S[i][r] * qd[i];
    const Spatial<T> sdot = detail::cross_motion(k.v[i], k.S[i]);
    for (int r = 0; r < 3; ++r) k.c[i][r] = pc[r] + sdot[r] * qd[i];
  }
  return k;
}

// Joint-space inertia by the composite-rigid-body recursion.
template <class T>
Mat<T> mass_matrix(const Model<T>& m, const Kinematics<T>& k) {
  const int n = m.dofs();
  std::vector<detail::Inertia<T>> comp(n);
  for (int i = 0; i < n; ++i) comp[i] = detail::body_inertia(m.bodies[i], k, i);
  for (int i = n - 1; i >= 0; --i) {
    if (m.bodies[i].parent >= 0) comp[m.bodies[i].parent] += comp[i];
  }
  Mat<T> A(n, n);
  for (int i = 0; i < n; ++i) {
    const Spatial<T> F = comp[i].apply(k.S[i]);
    A(i, i) = detail::dot(k.S[i], F);
    for (int j = m.bodies[i].parent; j >= 0; j = m.bodies[j].parent) {
      A(i, j) = detail::dot(k.S[j], F);
      A(j, i) = A(i, j);
    }
  }
  return A;
}

template <class T>
Mat<T> mass_matrix(const Model<T>& m, const Vec<T>& q) {
  return mass_matrix(m, kinematics(m, q, Vec<T>(q.size(), T(0.0))));
}

template <class T>
struct BiasForces {
  Vec<T> coriolis;  // b: centrifugal and Coriolis terms
  Vec<T> gravity;   // g
};

// Recursive Newton-Euler with zero joint acceleration, split into the
// velocity-product part and the gravity part.
template <class T>
BiasForces<T> bias_forces(const Model<T>& m, const Kinematics<T>& k) {
  const int n = m.dofs();
  std::vector<Spatial<T>> fb(n), fg(n);
  const Spatial<T> ag{T(0.0), T(-m.gravity_x), T(-m.gravity_z)};
  for (int i = 0; i < n; ++i) {
    const auto I = detail::body_inertia(m.bodies[i], k, i);
    const Spatial<T> Ia = I.apply(k.c[i]);
    const Spatial<T> h = I.apply(k.v[i]);
    const Spatial<T> vxh = detail::cross_force(k.v[i], h);
    for (int r = 0; r < 3; ++r) fb[i][r] = Ia[r] + vxh[r];
    fg[i] = I.apply(ag);
  }
  BiasForces<T> out{Vec<T>(n, T(0.0)), Vec<T>(n, T(0.0))};
  for (int i = n - 1; i >= 0; --i) {
    out.coriolis[i] = detail::dot(k.S[i], fb[i]);
    out.gravity[i] = detail::dot(k.S[i], fg[i]);
    const int p = m.bodies[i].parent;
    if (p >= 0) {
      for (int r = 0; r < 3; ++r) {
        fb[p][r] += fb[i][r];
        fg[p][r] += fg[i][r];
      }
    }
  }
  return out;
}

template <class T>
BiasForces<T> bias_forces(const Model<T>& m, const Vec<T>& q,
                          const Vec<T>& qd) {
  return bias_forces(m, kinematics(m, q, qd));
}

// World position and orientation of a point given in a link frame.
template <class T>
PlanarPoint<T> forward_kinematics(const Model<T>& m, const Kinematics<T>& k,
                                  int link, const T& local_x,
                                  const T& local_z) {
  using std::cos;
  using std::sin;
  if (link < 0 || link >= static_cast<int>(m.link_body.size())) {
    throw InvalidArgument("forward_kinematics: invalid link index");
  }
  const int b = m.link_body[link];
  const T cs = cos(k.phi[b]), sn = sin(k.phi[b]);
  return {k.px[b] + cs * local_x - sn * local_z,
          k.pz[b] + sn * local_x + cs * local_z, k.phi[b]};
}

template <class T>
PlanarPoint<T> forward_kinematics(const Model<T>& m, const Vec<T>& q,
                                  int link, const T& local_x,
                                  const T& local_z) {
  return forward_kinematics(m, kinematics(m, q, Vec<T>(q.size(), T(0.0))),
                            link, local_x, local_z);
}

namespace detail {

template <class T>
void contact_world(const Model<T>& m, const Kinematics<T>& k,
                   const ContactPoint<T>& cp, T& rx, T& rz) {
  using std::cos;
  using std::sin;
  const T cs = cos(k.phi[cp.body]), sn = sin(k.phi[cp.body]);
  rx = k.px[cp.body] + cs * cp.local_x - sn * cp.local_z;
  rz = k.pz[cp.body] + sn * cp.local_x + cs * cp.local_z;
  (void)m;
}

}  // namespace detail

template <class T>
std::array<T, 2> contact_position(const Model<T>& m, const Kinematics<T>& k,
                                  int contact) {
  T rx, rz;
  detail::contact_world(m, k, m.contacts.at(contact), rx, rz);
  return {rx, rz};
}

// 2 x n map from joint velocity to the world velocity of the contact point.
template <class T>
Mat<T> contact_jacobian(const Model<T>& m, const Kinematics<T>& k,
                        int contact) {
  const ContactPoint<T>& cp = m.contacts.at(contact);
  T rx, rz;
  detail::contact_world(m, k, cp, rx, rz);
  Mat<T> J(2, m.dofs());
  for (int j = cp.body; j >= 0; j = m.bodies[j].parent) {
    const Spatial<T>& s = k.S[j];
    J(0, j) = s[1] - s[0] * rz;
    J(1, j) = s[2] + s[0] * rx;
  }
  return J;
}

// d/dt(J) qd, i.e. the contact-point acceleration when qdd = 0.
template <class T>
std::array<T, 2> contact_jdot_qdot(const Model<T>& m, const Kinematics<T>& k,
                                   int contact) {
  const ContactPoint<T>& cp = m.contacts.at(contact);
  T rx, rz;
  detail::contact_world(m, k, cp, rx, rz);
  const Spatial<T>& v = k.v[cp.body];
  const Spatial<T>& c = k.c[cp.body];
  const T vx = v[1] - v[0] * rz;
  const T vz = v[2] + v[0] * rx;
  return {c[1] - c[0] * rz - v[0] * vz, c[2] + c[0] * rx + v[0] * vx};
}

// Stacks the Jacobians (and Jdot qdot) of several contacts. A second point on
// a body that is already held only adds its normal row: in the plane the
// tangential row would be linearly dependent on the others.
template <class T>
std::pair<Mat<T>, Vec<T>> stacked_contacts(const Model<T>& m,
                                           const Kinematics<T>& k,
                                           std::span<const int> contacts) {
  const int n = m.dofs();
  std::vector<std::pair<int, int>> rows;  // (contact, row within contact)
  std::vector<int> seen;
  for (int ci : contacts) {
    const int body = m.contacts.at(ci).body;
    const bool repeat = std::find(seen.begin(), seen.end(), body) != seen.end();
    if (!repeat) rows.emplace_back(ci, 0);
    rows.emplace_back(ci, 1);
    seen.push_back(body);
  }
  Mat<T> J(static_cast<int>(rows.size()), n);
  Vec<T> jdqd(J.rows());
  int prev = -1;
  Mat<T> Jc;
  std::array<T, 2> a;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto [ci, row] = rows[r];
    if (ci != prev || r == 0) {
      Jc = contact_jacobian(m, k, ci);
      a = contact_jdot_qdot(m, k, ci);
      prev = ci;
    }
    for (int c = 0; c < n; ++c) J(static_cast<int>(r), c) = Jc(row, c);
    jdqd[r] = a[row];
  }
  return {std::move(J), std::move(jdqd)};
}

// Contact-space inertia, dynamically consistent inverse and null-space
// projector of a contact Jacobian.
template <class T>
struct OperationalOperators {
  Mat<T> lambda;   // (J A^-1 J^T)^-1
  Mat<T> jbar;     // A^-1 J^T lambda
  Mat<T> nullspace;  // I - jbar J
};

template <class T>
OperationalOperators<T> operational_operators(const Lu<T>& A_lu,
                                              const Mat<T>& J) {
  const Mat<T> Ainv_Jt = A_lu.solve(J.transposed());
  const Mat<T> lambda_inv = J * Ainv_Jt;
  OperationalOperators<T> ops;
  ops.lambda = Lu<T>(lambda_inv, "contact-space inertia").inverse();
  ops.jbar = Ainv_Jt * ops.lambda;
  const int n = J.cols();
  ops.nullspace = Mat<T>::identity(n);
  const Mat<T> P = ops.jbar * J;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) ops.nullspace(r, c) -= P(r, c);
  }
  return ops;
}

template <class T>
OperationalOperators<T> operational_operators(const Mat<T>& A,
                                              const Mat<T>& J) {
  return operational_operators(Lu<T>(A, "mass matrix"), J);
}

// S^T tau: actuator torques scattered into generalized coordinates.
template <class T>
Vec<T> actuation(const Model<T>& m, const Vec<T>& tau) {
  if (static_cast<int>(tau.size()) != m.actuators()) {
    throw ShapeError("expected " + std::to_string(m.actuators()) +
                     " actuator torques, got " + std::to_string(tau.size()));
  }
  Vec<T> out(m.dofs(), T(0.0));
  for (std::size_t i = 0; i < tau.size(); ++i) out[m.actuated[i]] = tau[i];
  return out;
}

// qdd = A^-1 (S^T tau + extra - b - g).
template <class T>
Vec<T> free_forward_dynamics(const Model<T>& m, const Vec<T>& q,
                             const Vec<T>& qd, const Vec<T>& tau,
                             const Vec<T>* extra_force = nullptr) {
  const Kinematics<T> k = kinematics(m, q, qd);
  const Mat<T> A = mass_matrix(m, k);
  const BiasForces<T> bf = bias_forces(m, k);
  Vec<T> rhs = actuation(m, tau) - bf.coriolis - bf.gravity;
  if (extra_force != nullptr) rhs = rhs + *extra_force;
  return Lu<T>(A, "mass matrix").solve(rhs);
}

// qdd = A^-1 (N^T (S^T tau - b - g) - J^T lambda Jdot qd), which keeps every
// listed contact point unaccelerated. An empty contact list falls back to
// free dynamics.
template <class T>
Vec<T> constrained_forward_dynamics(const Model<T>& m, const Vec<T>& q,
                                    const Vec<T>& qd, const Vec<T>& tau,
                                    std::span<const int> contacts) {
  if (contacts.empty()) return free_forward_dynamics(m, q, qd, tau);
  const Kinematics<T> k = kinematics(m, q, qd);
  const Mat<T> A = mass_matrix(m, k);
  const BiasForces<T> bf = bias_forces(m, k);
  const auto [J, jdqd] = stacked_contacts(m, k, contacts);
  const Lu<T> A_lu(A, "mass matrix");
  const OperationalOperators<T> ops = operational_operators(A_lu, J);
  const Vec<T> generalized = actuation(m, tau) - bf.coriolis - bf.gravity;
  const Vec<T> projected = mul_transposed(ops.nullspace, generalized);
  const Vec<T> correction = mul_transposed(J, ops.lambda * jdqd);
  return A_lu.solve(projected - correction);
}

// Explicit Euler: q+ = q + qd dt, qd+ = qd + qdd dt.
template <class T>
ChainState<T> euler_step(const ChainState<T>& s, const Vec<T>& qdd,
                         double dt) {
  if (!(dt >= 0.0)) throw InvalidArgument("euler_step: dt must be >= 0");
  ChainState<T> out = s;
  for (std::size_t i = 0; i < s.q.size(); ++i) {
    out.q[i] = s.q[i] + s.qd[i] * dt;
    out.qd[i] = s.qd[i] + qdd[i] * dt;
  }
  return out;
}

// Semi-implicit Euler: the velocity update is applied before the position
// update.
template <class T>
ChainState<T> semi_implicit_euler_step(const ChainState<T>& s,
                                       const Vec<T>& qdd, double dt) {
  if (!(dt >= 0.0)) {
    throw InvalidArgument("semi_implicit_euler_step: dt must be >= 0");
  }
  ChainState<T> out = s;
  for (std::size_t i = 0; i < s.q.size(); ++i) {
    out.qd[i] = s.qd[i] + qdd[i] * dt;
    out.q[i] = s.q[i] + out.qd[i] * dt;
  }
  return out;
}

// Kinetic plus potential energy.
template <class T>
T total_energy(const Model<T>& m, const Vec<T>& q, const Vec<T>& qd) {
  const Kinematics<T> k = kinematics(m, q, qd);
  T kinetic(0.0), potential(0.0);
  for (int i = 0; i < m.dofs(); ++i) {
    const Body<T>& b = m.bodies[i];
    T cx, cz;
    detail::com_world(b, k.px[i], k.pz[i], k.phi[i], cx, cz);
    const T w = k.v[i][0];
    const T vx = k.v[i][1] - w * cz;
    const T vz = k.v[i][2] + w * cx;
    kinetic += 0.5 * (b.mass * (vx * vx + vz * vz) + b.inertia * w * w);
    potential -= b.mass * (cx * m.gravity_x + cz * m.gravity_z);
  }
  return kinetic + potential;
}

}  // namespace nmoe::rbd
