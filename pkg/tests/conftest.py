from hypothesis import settings

# timings vary with the machine; correctness is what the properties check
settings.register_profile("default", deadline=None)
settings.load_profile("default")
