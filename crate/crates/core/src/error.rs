use crate::model::FullState;
use crate::ode::OdeError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("the full system needs eps > 0")]
    SingularLimit,
    #[error("the (v, p) chart is singular at v = {v}")]
    ChartSingular { v: f64 },
    #[error("degenerate fold (cusp) at v = {v}")]
    DegenerateFold { v: f64 },
    #[error("the layer problem is not S-shaped for these parameters")]
    NotSShaped,
    #[error("no attracting landing point for a fast jump from v = {v}")]
    NoLanding { v: f64 },
    #[error("reduced vector field is singular near the fold at (v, p) = ({v}, {p})")]
    NearFold { v: f64, p: f64 },
    #[error("equilibrium at v = {v} is not a saddle of the desingularized flow")]
    NotASaddle { v: f64 },
    #[error("the unstable manifold of the saddle reaches no fold")]
    NoFoldCrossing,
    #[error("the stable manifold of the saddle does not cross the projection curve P_l")]
    NoSectionCrossing,
    #[error("slow flow converged to an equilibrium at v = {}", state.v)]
    ConvergedToEquilibrium { state: FullState },
    #[error("slow flow reached a folded singularity at v = {}", state.v)]
    HitFoldedSingularity { state: FullState },
    #[error("slow flow left the voltage window at v = {}", state.v)]
    LeftDomain { state: FullState },
    #[error("slow flow started off a stable branch (dv i_ion = {dv})")]
    NotOnStableBranch { dv: f64 },
    #[error("p = {p} is outside the section interval [{lo}, {hi}]")]
    OutOfInterval { p: f64, lo: f64, hi: f64 },
    #[error("the singular return map has no fixed point on its interval")]
    NoFixedPoint,
    #[error("wrong scenario: {0}")]
    WrongScenario(&'static str),
    #[error("no sign change on the scanned interval")]
    NoSignChange,
    #[error("limit cycle lost at i = {i}")]
    CycleLost { i: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
}
