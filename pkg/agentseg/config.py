# -*- coding: utf-8 -*-

"""
agentseg.config
---------------

The `config` module handles `agentseg` configuration.

Library functions never read this configuration: they take explicit
configuration objects. The command line maps the options below onto its flag
defaults.
"""

import os
import os.path as osp

from guidata import configtools

from agentseg.utils import conf

CONF_VERSION = "1.0.0"

APP_NAME = "PyAgentSeg"
MOD_NAME = "agentseg"

_ = configtools.get_translation(MOD_NAME)

APP_DESC = _(
    """Learn pedestrian agent models from trajectories and segment trajectories
into agent-labelled parts.
"""
)

DEBUG_VAR_STR = "AGENTSEGDEBUG"
try:
    DEBUG = int(os.environ.get(DEBUG_VAR_STR, ""))
except ValueError:
    DEBUG = 1 if len(os.environ.get(DEBUG_VAR_STR, "")) > 0 else 0

THREADS_VAR_STR = "AGENTSEG_THREADS"


def get_thread_count() -> int:
    """Worker count from the environment (read at each call)"""
    try:
        return max(1, int(os.environ.get(THREADS_VAR_STR, "1")))
    except ValueError:
        return 1


DATETIME_FORMAT = "%d/%m/%Y - %H:%M:%S"


class MainSection(conf.Section, metaclass=conf.SectionMeta):
    """Class defining the main configuration section structure.
    Each class attribute is an option (metaclass is automatically affecting
    option names in .INI file based on class attribute names)."""

    traceback_log_path = conf.ConfigPathOption()


class EmSection(conf.Section, metaclass=conf.SectionMeta):
    """Agent estimation defaults"""

    t_cap = conf.IntOption()
    max_iters = conf.IntOption()
    loglik_tol = conf.FloatOption()
    variant = conf.Option()
    seed = conf.IntOption()


class HmmSection(conf.Section, metaclass=conf.SectionMeta):
    """Segmentation defaults"""

    window = conf.IntOption()
    overlap = conf.Option()
    max_iters = conf.IntOption()
    tol = conf.FloatOption()
    self_prob = conf.FloatOption()


class RdpSection(conf.Section, metaclass=conf.SectionMeta):
    """RDP baseline defaults"""

    eps_min = conf.FloatOption()
    eps_max = conf.FloatOption()
    eps_count = conf.IntOption()


class AnalyticsSection(conf.Section, metaclass=conf.SectionMeta):
    """Behavior analysis defaults"""

    rows = conf.IntOption()
    cols = conf.IntOption()
    scene_width = conf.FloatOption()
    scene_height = conf.FloatOption()
    threshold = conf.FloatOption()
    density_resolution = conf.IntOption()


# Usage (example): Conf.em.t_cap.get(20)
class Conf(conf.Configuration, metaclass=conf.ConfMeta):
    """Class defining PyAgentSeg configuration structure.
    Each class attribute is a section (metaclass is automatically affecting
    section names in .INI file based on class attribute names)."""

    main = MainSection()
    em = EmSection()
    hmm = HmmSection()
    rdp = RdpSection()
    analytics = AnalyticsSection()


def get_old_log_fname(fname):
    """Return old log fname from current log fname"""
    return osp.splitext(fname)[0] + ".1.log"


def initialize():
    """Initialize application configuration"""
    Conf.initialize(APP_NAME, CONF_VERSION, load=not DEBUG)
    Conf.main.traceback_log_path.get(f".{APP_NAME}_traceback.log")
    Conf.em.t_cap.get(20)
    Conf.em.max_iters.get(50)
    Conf.em.loglik_tol.get(1e-4)
    Conf.em.variant.get("imda")
    Conf.em.seed.get(0)
    Conf.hmm.window.get(3)
    Conf.hmm.overlap.get(False)
    Conf.hmm.max_iters.get(100)
    Conf.hmm.tol.get(1e-6)
    Conf.hmm.self_prob.get(0.9)
    Conf.rdp.eps_min.get(10.0)
    Conf.rdp.eps_max.get(300.0)
    Conf.rdp.eps_count.get(30)
    Conf.analytics.rows.get(10)
    Conf.analytics.cols.get(10)
    Conf.analytics.scene_width.get(1920.0)
    Conf.analytics.scene_height.get(1080.0)
    Conf.analytics.threshold.get(0.2)
    Conf.analytics.density_resolution.get(64)


initialize()
