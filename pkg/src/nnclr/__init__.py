"""Desk-scale nearest-neighbor contrastive representation learning.

Library layout:
    numerics    matrix primitives, softmax CE, finite-difference harness
    layers      linear / batch-norm / relu with manual backward passes
    model       backbone MLP + projection head + prediction head (+ EMA shadow)
    support_set FIFO embedding queue and NN retrieval variants
    losses      InfoNCE, SimCLR, NNCLR, NNSiam objectives
    augment     two-view generation for images and vectors
    optim       LARS / SGD-momentum with bias exclusion, warmup+cosine schedule
    data        blob clusters and the CIFAR-10 binary format
    train       the pretraining loop
    evaluation  linear probe and NN-statistics reports
    cli         pretrain / eval / ablate / gradcheck / report subcommands
"""

__version__ = "0.1.0"
