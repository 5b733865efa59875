"""Rescaling combined with lossless or lossy storage."""
from .codec import LossyCodec, LossyStream, lossy_decode, lossy_encode, quant_table
from .crm import CrmModel, CrmTrainConfig, crm_restore, train_crm
from .rd import Pipeline, RdPoint, rd_eval

__all__ = ["LossyCodec", "LossyStream", "lossy_encode", "lossy_decode", "quant_table", "CrmModel",
           "CrmTrainConfig", "crm_restore", "train_crm", "Pipeline", "RdPoint", "rd_eval"]
