#include <stdio.h>
#include <math.h>
#include "mmot.h"
int main(void) {
  size_t sizes[3] = {3,3,3};
  double pts[9] = {0,1,2,0,1,2,0,1,2}, w[9];
  for (int i = 0; i < 9; i++) w[i] = 1.0/3.0;
  MmotSpace *s = NULL; MmotCost *c = NULL; MmotSolution *sol = NULL;
  if (mmot_space_new_1d(3, sizes, pts, w, &s) != MMOT_STATUS_OK) return 1;
  if (mmot_cost_builtin("coulomb1d", &c) != MMOT_STATUS_OK) return 2;
  if (mmot_solve(s, c, &sol) != MMOT_STATUS_OK) { puts(mmot_last_error()); return 3; }
  double p, d; mmot_solution_values(sol, &p, &d);
  printf("%s value %.6f dual %.6f\n", mmot_version(), p, d);
  mmot_solution_free(sol); mmot_cost_free(c); mmot_space_free(s);
  return fabs(p - 2.5) > 1e-12;
}
