from sigma2r.autodiff import Tensor
from sigma2r.autodiff import backward
from sigma2r.autodiff import no_grad
from sigma2r.exc import Sigma2RError
from sigma2r.layers import build_model
from sigma2r.losses import LossState
from sigma2r.losses import joint_loss
from sigma2r.settings import TrainConfig
from sigma2r.training import train


__all__ = (
    'Tensor',
    'backward',
    'no_grad',
    'Sigma2RError',
    'build_model',
    'LossState',
    'joint_loss',
    'TrainConfig',
    'train',
)
