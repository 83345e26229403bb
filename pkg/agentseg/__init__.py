# -*- coding: utf-8 -*-
"""
PyAgentSeg
----------

Pedestrian agent models learned from trajectories, and semantic segmentation
of trajectories with those agents.
"""

__version__ = "1.0.0"
