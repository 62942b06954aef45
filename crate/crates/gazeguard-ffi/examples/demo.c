/* Minimal C consumer: render a synthetic eye image, smooth a noisy series,
 * and run the debounce machine.
 *
 * Build (from the workspace root):
 *   cargo build --release -p gazeguard-ffi
 *   cc crates/gazeguard-ffi/examples/demo.c \
 *      -Icrates/gazeguard-ffi/include \
 *      target/release/libgazeguard_ffi.a -lm -o demo && ./demo
 */
#include <stdio.h>
#include <stdlib.h>

#include "gazeguard.h"

int main(void) {
  printf("gazeguard %s\n", gg_version());

  double pixels[2160];
  if (gg_render_eye_image(0.2, -0.1, 0.0, 0.0, 7, pixels) != GgStatus_Ok) {
    fprintf(stderr, "render failed: %s\n", gg_last_error_message());
    return 1;
  }
  printf("rendered image, first pixel %.3f\n", pixels[0]);

  double obs[64];
  double smoothed[64];
  for (int i = 0; i < 64; i++) {
    obs[i] = 0.25 + 0.02 * ((i * 2654435761u >> 16 & 0xff) / 255.0 - 0.5);
  }
  if (gg_rts_smooth(obs, 64, 1e-4, 1e-2, smoothed) != GgStatus_Ok) {
    fprintf(stderr, "smooth failed: %s\n", gg_last_error_message());
    return 1;
  }
  printf("smoothed[0] = %.4f, smoothed[63] = %.4f\n", smoothed[0], smoothed[63]);

  GgDebounce *stream = NULL;
  if (gg_debounce_new(5, &stream) != GgStatus_Ok) return 1;
  unsigned char stable = 0;
  gg_debounce_push(stream, 1, &stable);
  for (int i = 0; i < 6; i++) {
    gg_debounce_push(stream, 0, &stable);
    printf("after %d abnormal records: stable state %d\n", i + 1, stable);
  }
  gg_debounce_free(stream);

  printf("angular error (0.1,0.2) vs (0.15,0.18): %.4f deg\n",
         gg_angular_error_deg(0.1, 0.2, 0.15, 0.18));
  return 0;
}
