/*@ requires 0 <= n <= 4; */
int sum_to_n(int n) {
    int s = 0;
    int i = 0;
    /*@
      loop invariant n == \at(n, Pre);
      loop invariant 0 <= i <= n;
    */
    while (i < n) {
        i = i + 1;
        s = s + 2;
    }
    /*@ assert s == 2 * n; */
    return s;
}
