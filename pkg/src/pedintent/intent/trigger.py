"""Fire one intention prediction per track about one second before interaction."""
SPEED_FLOOR_MS = 0.1
TRIGGER_BAND = (0.9, 1.1)


def time_to_interaction(distance_m, speed_kmh, speed_floor=SPEED_FLOOR_MS):
    """Seconds until the vehicle covers ``distance_m`` along its corridor axis."""
    return distance_m / max(speed_kmh / 3.6, speed_floor)


class InteractionTrigger:
    """Once-per-track trigger on the time-to-interaction band."""

    def __init__(self, band=TRIGGER_BAND, speed_floor=SPEED_FLOOR_MS):
        self.band = band
        self.speed_floor = speed_floor
        self.fired = set()

    def should_trigger(self, track_id, distance_m, speed_kmh):
        if track_id in self.fired:
            return False
        tti = time_to_interaction(distance_m, speed_kmh, self.speed_floor)
        if self.band[0] <= tti <= self.band[1]:
            self.fired.add(track_id)
            return True
        return False
