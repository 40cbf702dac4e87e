/*@ requires 0 <= n <= 4; */
int count_up(int n) {
    int i = 0;
    /*@
      loop invariant n == \at(n, Pre);
      loop invariant 0 <= i <= n;
      loop invariant i <= 0;
    */
    while (i < n) {
        i = i + 1;
    }
    /*@ assert i == n; */
    return i;
}
