"""randcal: randomized regression forecasters with calibration tooling.

Train (x, r) -> Gaussian forecasters whose CDF value at the observed label
tracks the random seed r, measure average/group/worst-group calibration
and sharpness, certify the per-sample calibration residuals with a
concentration bound, recalibrate with isotonic regression, and stress-test
decisions (Markov-style loss bounds, an adversarial credit-approval game).
"""

from ._kernels import backend_name
from .core import (
    EmpiricalPit,
    MonotoneMap,
    ece,
    pav_isotonic,
    std_normal_cdf,
    std_normal_inv_cdf,
    std_normal_pdf,
    w1_to_uniform,
)
from .data import (
    CreditSpec,
    Dataset,
    HeteroscedasticSpec,
    Standardizer,
    ToySpec,
    gen_credit,
    gen_heteroscedastic,
    gen_toy,
    load_csv,
    save_csv,
    split,
)
from .forecaster import (
    Forecaster,
    GaussianForecast,
    OracleForecaster,
    PassThroughForecaster,
    PitSample,
    RecalibratedForecast,
    RecalibratedForecaster,
    TrainedForecaster,
    load_forecaster,
    pit_sample,
    save_forecaster,
)
from .calibration import (
    CalibrationReport,
    GroupSpec,
    adversarial_curve,
    average_calibration_error,
    evaluate,
    group_calibration_error,
    interpretable_groups,
    mean_pit_residual,
    monotonicity_fraction,
    pit_violation_fraction,
    recalibrate,
    sharpness,
)
from .decision import (
    BankGameConfig,
    CurveLoss,
    MonotonicLossSpec,
    StepLoss,
    bank_decide,
    bank_loss_spec,
    best_action,
    expected_loss,
    markov_check,
    run_credit_game,
    train_customer_model,
)
from .nn import AdamState, ForwardTrace, MlpParams, adam_init, adam_step, mlp_backward, mlp_forward, mlp_init
from .training import (
    ResidualCertificate,
    TrainConfig,
    TrainResult,
    W1BoundConversion,
    certify_forecaster,
    hoeffding_slack,
    loss_combined,
    loss_nll,
    loss_pit,
    residual_to_w1_bound,
    train,
)

__version__ = "0.1.0"
