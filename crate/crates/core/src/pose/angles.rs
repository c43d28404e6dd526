use super::keypoints::Point3;

/// Denominator guard for the angle formula.
pub const ANGLE_EPS: f64 = 1e-8;

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

/// Angle at `p_b` between the limbs towards `p_a` and `p_c`, in radians.
///
/// `acos(((a - b) . (c - b)) / max(|a - b| |c - b|, eps))`, with the cosine clamped to
/// [-1, 1]. A zero-length limb gives a cosine of 0 and therefore pi/2.
///
/// `eps` only floors the denominator: adding it instead would pull a straight arm
/// about 1e-4 rad short of pi.
pub fn joint_angle(p_a: Point3, p_b: Point3, p_c: Point3, eps: f64) -> f64 {
    let u = sub(p_a, p_b);
    let v = sub(p_c, p_b);
    let cos = dot(u, v) / (norm(u) * norm(v)).max(eps);
    cos.clamp(-1.0, 1.0).acos()
}

/// Gradient of [`joint_angle`] with respect to the nine input coordinates,
/// returned as (d/dp_a, d/dp_b, d/dp_c).
///
/// Undefined where the clamp is active (collinear limbs) or a limb has zero length;
/// those cases return zeros.
pub fn joint_angle_gradient(p_a: Point3, p_b: Point3, p_c: Point3, eps: f64) -> [Point3; 3] {
    let u = sub(p_a, p_b);
    let v = sub(p_c, p_b);
    let nu = norm(u);
    let nv = norm(v);
    let den = nu * nv;
    let d = dot(u, v);
    if den <= eps {
        return [[0.0; 3]; 3];
    }
    let cos = d / den;
    if cos.abs() >= 1.0 {
        return [[0.0; 3]; 3];
    }
    let dtheta_dcos = -1.0 / (1.0 - cos * cos).sqrt();
    let mut ga = [0.0; 3];
    let mut gc = [0.0; 3];
    for k in 0..3 {
        // cos = d / (nu nv): d cos / d u_k = v_k / den - cos * u_k / nu^2
        let dcos_du = v[k] / den - cos * u[k] / (nu * nu);
        let dcos_dv = u[k] / den - cos * v[k] / (nv * nv);
        ga[k] = dtheta_dcos * dcos_du;
        gc[k] = dtheta_dcos * dcos_dv;
    }
    let gb = [-(ga[0] + gc[0]), -(ga[1] + gc[1]), -(ga[2] + gc[2])];
    [ga, gb, gc]
}
