use chns_mesh::Point;

/// Built-in test cases on `[−0.5, 0.5]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Two merging circles with a swirling velocity, `χ = 1`.
    Accuracy,
    /// Same data with a strong swirl, `χ = 100`.
    Circle,
    /// Heavy bubble falling under gravity.
    Bubble,
    /// Perturbed heavy-over-light interface.
    Rayleigh,
    /// Pure phase at rest.
    Custom,
}

/// Defaults of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioDefaults {
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    pub chi: f64,
    pub gravity: [f64; 2],
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Accuracy,
        ScenarioKind::Circle,
        ScenarioKind::Bubble,
        ScenarioKind::Rayleigh,
        ScenarioKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Accuracy => "accuracy",
            ScenarioKind::Circle => "circle",
            ScenarioKind::Bubble => "bubble",
            ScenarioKind::Rayleigh => "rayleigh",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn defaults(self) -> ScenarioDefaults {
        let gravity = [0.0, 1.0];
        match self {
            ScenarioKind::Accuracy => ScenarioDefaults { nx: 32, dt: 1e-5, t_end: 5e-4, chi: 1.0, gravity: [0.0; 2] },
            ScenarioKind::Circle => ScenarioDefaults { nx: 100, dt: 1e-3, t_end: 0.1, chi: 100.0, gravity: [0.0; 2] },
            ScenarioKind::Bubble => ScenarioDefaults { nx: 100, dt: 1e-4, t_end: 0.25, chi: 0.0, gravity },
            ScenarioKind::Rayleigh => ScenarioDefaults { nx: 100, dt: 1e-4, t_end: 0.35, chi: 0.0, gravity },
            ScenarioKind::Custom => ScenarioDefaults { nx: 16, dt: 1e-3, t_end: 1e-2, chi: 0.0, gravity: [0.0; 2] },
        }
    }

    /// Initial phase field for interface width `eps`.
    pub fn phi0(self, eps: f64, x: Point) -> f64 {
        let s = std::f64::consts::SQRT_2 * eps;
        let [x, y] = x;
        match self {
            ScenarioKind::Accuracy | ScenarioKind::Circle => {
                let r1 = ((x - 0.1).powi(2) + (y - 0.1).powi(2)).sqrt();
                let r2 = ((x + 0.15).powi(2) + (y + 0.15).powi(2)).sqrt();
                2.0 * (((0.25 - r1).max(0.0) + (0.15 - r2).max(0.0)) / s).tanh() - 1.0
            }
            ScenarioKind::Bubble => ((0.2 - (x * x + y * y).sqrt()) / s).tanh(),
            ScenarioKind::Rayleigh => ((y - 0.1 * (-(x + 0.2).powi(2) / 0.1).exp()) / s).tanh(),
            ScenarioKind::Custom => 1.0,
        }
    }

    /// Initial velocity with swirl strength `chi`.
    pub fn u0(self, chi: f64, x: Point) -> [f64; 2] {
        match self {
            ScenarioKind::Accuracy | ScenarioKind::Circle => {
                let [x, y] = x;
                let c = (0.16 - (x * x + y * y)).max(0.0);
                [chi * y * c, -chi * x * c]
            }
            _ => [0.0, 0.0],
        }
    }
}
