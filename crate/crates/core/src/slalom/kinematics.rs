use std::f64::consts::PI;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Planar pose: position in meters, heading in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    /// Heading is normalized to `(-pi, pi]`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn from_slice(q: &[f64]) -> Self {
        Self::new(q[0], q[1], q[2])
    }
}

/// Backward-difference velocity `(q_t - q_{t-1}) / dt`, heading difference wrapped.
pub fn fd_velocity(q_t: &[f64], q_prev: &[f64], dt: f64) -> [f64; 3] {
    [
        (q_t[0] - q_prev[0]) / dt,
        (q_t[1] - q_prev[1]) / dt,
        wrap_angle(q_t[2] - q_prev[2]) / dt,
    ]
}

/// Backward-difference acceleration `(q_t - 2 q_{t-1} + q_{t-2}) / dt^2`.
pub fn fd_acceleration(q_t: &[f64], q_prev: &[f64], q_prev2: &[f64], dt: f64) -> [f64; 3] {
    let dt2 = dt * dt;
    [
        (q_t[0] - 2.0 * q_prev[0] + q_prev2[0]) / dt2,
        (q_t[1] - 2.0 * q_prev[1] + q_prev2[1]) / dt2,
        (wrap_angle(q_t[2] - q_prev[2]) - wrap_angle(q_prev[2] - q_prev2[2])) / dt2,
    ]
}

/// Which no-slip expression is enforced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonholonomicForm {
    /// Zero lateral velocity in the body frame: `xd sin(theta) - yd cos(theta)`.
    #[default]
    NoSlip,
    /// `xd cos(theta) - yd sin(theta)`, which forbids forward motion at
    /// zero heading; kept only for comparison.
    Literal,
}

/// No-slip residual at step `t` and its gradient with respect to
/// `(q_t, q_{t-1})`.
pub fn nonholonomic_residual(q_t: &[f64], q_prev: &[f64], dt: f64, form: NonholonomicForm) -> (f64, [f64; 6]) {
    let [xd, yd, _] = fd_velocity(q_t, q_prev, dt);
    let (s, c) = q_t[2].sin_cos();
    match form {
        NonholonomicForm::NoSlip => {
            let r = xd * s - yd * c;
            let (ax, ay) = (s / dt, -c / dt);
            (r, [ax, ay, xd * c + yd * s, -ax, -ay, 0.0])
        }
        NonholonomicForm::Literal => {
            let r = xd * c - yd * s;
            let (ax, ay) = (c / dt, -s / dt);
            (r, [ax, ay, -xd * s - yd * c, -ax, -ay, 0.0])
        }
    }
}

/// Disc obstacle clearance, feasible when `<= 0`, with its gradient in `(x, y)`.
///
/// Exactly at the center the gradient points along `-y`, so a descent step
/// moves the vehicle towards `+y`.
pub fn obstacle_clearance(x: f64, y: f64, center: (f64, f64), radius: f64, d_avoid: f64) -> (f64, [f64; 2]) {
    let (dx, dy) = (x - center.0, y - center.1);
    let dist = dx.hypot(dy);
    let g = radius + d_avoid - dist;
    if dist > 0.0 {
        (g, [-dx / dist, -dy / dist])
    } else {
        (g, [0.0, -1.0])
    }
}
