from hypothesis import settings

settings.register_profile("beamlab", deadline=None, max_examples=60)
settings.load_profile("beamlab")
