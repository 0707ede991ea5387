#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace cloudnn {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalize(const Vec3& v) { return v / length(v); }

// Orthonormal basis around a unit vector n (n becomes the third axis).
inline void onb(const Vec3& n, Vec3& t, Vec3& b) {
    if (std::abs(n.x) > 0.9)
        t = normalize(cross(Vec3{0, 1, 0}, n));
    else
        t = normalize(cross(Vec3{1, 0, 0}, n));
    b = cross(n, t);
}

// Spherical direction with cos_theta measured from axis `w`.
inline Vec3 direction_from(const Vec3& w, double cos_theta, double phi) {
    double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    Vec3 t, b;
    onb(w, t, b);
    return t * (sin_theta * std::cos(phi)) + b * (sin_theta * std::sin(phi)) + w * cos_theta;
}

struct Box3 {
    Vec3 min{0, 0, 0};
    Vec3 max{0, 0, 0};

    Vec3 extent() const { return max - min; }
    Vec3 center() const { return (min + max) * 0.5; }
    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y &&
               p.z >= min.z && p.z <= max.z;
    }

    // Slab test; on hit t0 <= t1 give the parametric overlap of the ray with the box.
    bool intersect(const Vec3& o, const Vec3& d, double& t0, double& t1) const {
        t0 = -1e300;
        t1 = 1e300;
        for (int i = 0; i < 3; ++i) {
            double oi = o[i], di = d[i], lo = min[i], hi = max[i];
            if (std::abs(di) < 1e-300) {
                if (oi < lo || oi > hi) return false;
                continue;
            }
            double inv = 1.0 / di;
            double ta = (lo - oi) * inv, tb = (hi - oi) * inv;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t0 > t1) return false;
        }
        return true;
    }
};

}  // namespace cloudnn
