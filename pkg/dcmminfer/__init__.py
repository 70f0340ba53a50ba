# -*- coding: utf-8 -*-

"""Top-level package for DCMM Inference."""

__author__ = """dcmminfer developers"""
# fmt: off
__version__ = '0.1.0'
# fmt: on
