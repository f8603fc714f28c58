import os

from hypothesis import Verbosity, settings

settings.register_profile("ci", settings(max_examples=1000, deadline=None))
settings.register_profile("dev", settings(max_examples=5, deadline=None))
settings.register_profile("debug", settings(max_examples=10, verbosity=Verbosity.verbose, deadline=None))
settings.register_profile("default", settings(deadline=None))
settings.load_profile(os.getenv(u'HYPOTHESIS_PROFILE', 'default'))
