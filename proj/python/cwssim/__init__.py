"""Contrast-weighted SSIM metrics, CE masks, distance maps, style-transfer kernels and DCE phantoms."""

from ._cwssim import (  # noqa: F401
    DimensionError,
    IoError,
    ValidationError,
    __version__,
    adaconv_apply,
    adain,
    bidirectional_convlstm,
    convlstm_cell,
    cw_ssim,
    detect_ce,
    distance_map,
    distance_transform,
    evaluate_triple,
    generate_phantom,
    grad_check,
    invert_map,
    loss_adv_mse,
    loss_feature,
    loss_l1,
    loss_style_frob,
    ms_ssim,
    psnr,
    read_tensor,
    run_cli,
    ssim,
    write_tensor,
)
